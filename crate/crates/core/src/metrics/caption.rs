use std::collections::{BTreeMap, HashMap};

use rust_stemmers::{Algorithm, Stemmer};
use serde::{Deserialize, Serialize};

use super::tokens::tokenize;

const MAX_ORDER: usize = 4;
const ROUGE_BETA: f64 = 1.2;
const CIDER_SCALE: f64 = 10.0;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CaptionScores {
    pub bleu: f64,
    pub bleu4: f64,
    pub meteor_lite: f64,
    pub rouge_l: f64,
    pub cider: f64,
}

type Ngrams = HashMap<Vec<String>, usize>;

fn ngrams(tokens: &[String], n: usize) -> Ngrams {
    let mut out = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *out.entry(w.to_vec()).or_default() += 1;
        }
    }
    out
}

/// Sufficient statistics for BLEU; add them up for a corpus-level score.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BleuStats {
    pub matches: [usize; MAX_ORDER],
    pub totals: [usize; MAX_ORDER],
    pub candidate_len: usize,
    pub reference_len: usize,
}

impl BleuStats {
    pub fn compute(candidate: &[String], references: &[Vec<String>]) -> Self {
        let mut stats = Self {
            candidate_len: candidate.len(),
            reference_len: closest_length(candidate.len(), references),
            ..Default::default()
        };
        for n in 1..=MAX_ORDER {
            let cand = ngrams(candidate, n);
            let mut max_ref: Ngrams = HashMap::new();
            for r in references {
                for (g, c) in ngrams(r, n) {
                    let e = max_ref.entry(g).or_default();
                    *e = (*e).max(c);
                }
            }
            stats.matches[n - 1] = cand.iter().map(|(g, c)| (*c).min(max_ref.get(g).copied().unwrap_or(0))).sum();
            stats.totals[n - 1] = candidate.len().saturating_sub(n - 1);
        }
        stats
    }

    pub fn merge(&mut self, other: &Self) {
        for n in 0..MAX_ORDER {
            self.matches[n] += other.matches[n];
            self.totals[n] += other.totals[n];
        }
        self.candidate_len += other.candidate_len;
        self.reference_len += other.reference_len;
    }

    pub fn precisions(&self) -> [f64; MAX_ORDER] {
        let mut p = [0.0; MAX_ORDER];
        for n in 0..MAX_ORDER {
            if self.totals[n] > 0 {
                p[n] = self.matches[n] as f64 / self.totals[n] as f64;
            }
        }
        p
    }

    pub fn brevity_penalty(&self) -> f64 {
        if self.candidate_len == 0 {
            0.0
        } else if self.candidate_len >= self.reference_len {
            1.0
        } else {
            (1.0 - self.reference_len as f64 / self.candidate_len as f64).exp()
        }
    }

    /// Geometric mean of the first `orders` precisions times the brevity
    /// penalty.
    pub fn score(&self, orders: usize) -> f64 {
        let p = self.precisions();
        if orders == 0 || p[..orders].iter().any(|v| *v == 0.0) {
            return 0.0;
        }
        let log_mean = p[..orders].iter().map(|v| v.ln()).sum::<f64>() / orders as f64;
        self.brevity_penalty() * log_mean.exp()
    }

    /// All orders the candidate is long enough to have, up to four.
    pub fn bleu(&self) -> f64 {
        self.score(self.candidate_len.min(MAX_ORDER))
    }

    pub fn bleu4(&self) -> f64 {
        self.score(MAX_ORDER)
    }
}

fn closest_length(c: usize, references: &[Vec<String>]) -> usize {
    references
        .iter()
        .map(Vec::len)
        .min_by_key(|r| (r.abs_diff(c), *r))
        .unwrap_or(0)
}

fn lcs(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    for x in a {
        let mut cur = vec![0usize; b.len() + 1];
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        prev = cur;
    }
    prev[b.len()]
}

/// LCS F-measure against the best-matching reference.
pub fn rouge_l(candidate: &[String], references: &[Vec<String>]) -> f64 {
    references
        .iter()
        .map(|r| {
            let l = lcs(candidate, r) as f64;
            if l == 0.0 {
                return 0.0;
            }
            let p = l / candidate.len() as f64;
            let rec = l / r.len() as f64;
            let b2 = ROUGE_BETA * ROUGE_BETA;
            (1.0 + b2) * p * rec / (rec + b2 * p)
        })
        .fold(0.0, f64::max)
}

/// Unigram alignment on exact then stemmed forms, with a fragmentation
/// penalty on the number of contiguous chunks. No synonym stage.
pub fn meteor_lite(candidate: &[String], references: &[Vec<String>]) -> f64 {
    let stemmer = Stemmer::create(Algorithm::English);
    references
        .iter()
        .map(|r| meteor_single(candidate, r, &stemmer))
        .fold(0.0, f64::max)
}

fn meteor_single(candidate: &[String], reference: &[String], stemmer: &Stemmer) -> f64 {
    let mut aligned: Vec<Option<usize>> = vec![None; candidate.len()];
    let mut used = vec![false; reference.len()];
    let stages: [&dyn Fn(&str) -> String; 2] = [&|w: &str| w.to_string(), &|w: &str| stemmer.stem(w).into_owned()];
    for stage in stages {
        let ref_forms: Vec<String> = reference.iter().map(|w| stage(w)).collect();
        for (i, w) in candidate.iter().enumerate() {
            if aligned[i].is_some() {
                continue;
            }
            let form = stage(w);
            if let Some(j) = (0..reference.len()).find(|j| !used[*j] && ref_forms[*j] == form) {
                aligned[i] = Some(j);
                used[j] = true;
            }
        }
    }
    let matches = aligned.iter().flatten().count();
    if matches == 0 {
        return 0.0;
    }
    let mut chunks = 0;
    let mut prev: Option<usize> = None;
    for a in &aligned {
        match (a, prev) {
            (Some(j), Some(p)) if *j == p + 1 => {}
            (Some(_), _) => chunks += 1,
            (None, _) => {}
        }
        prev = *a;
    }
    let m = matches as f64;
    let p = m / candidate.len() as f64;
    let r = m / reference.len() as f64;
    let fmean = 10.0 * p * r / (r + 9.0 * p);
    let penalty = 0.5 * (chunks as f64 / m).powi(3);
    fmean * (1.0 - penalty)
}

/// Document frequencies of n-grams over a reference corpus.
#[derive(Debug, Clone, Default)]
pub struct CiderIdf {
    df: HashMap<Vec<String>, usize>,
    documents: usize,
}

impl CiderIdf {
    /// One entry per item; each entry holds that item's reference captions.
    pub fn from_references(corpus: &[Vec<Vec<String>>]) -> Self {
        let mut df: HashMap<Vec<String>, usize> = HashMap::new();
        for refs in corpus {
            let mut seen: std::collections::HashSet<Vec<String>> = std::collections::HashSet::new();
            for r in refs {
                for n in 1..=MAX_ORDER {
                    seen.extend(ngrams(r, n).into_keys());
                }
            }
            for g in seen {
                *df.entry(g).or_default() += 1;
            }
        }
        Self {
            df,
            documents: corpus.len(),
        }
    }

    fn idf(&self, gram: &[String]) -> f64 {
        let df = self.df.get(gram).copied().unwrap_or(0).max(1) as f64;
        (self.documents.max(1) as f64).ln() - df.ln()
    }

    fn vector(&self, tokens: &[String], n: usize) -> (BTreeMap<Vec<String>, f64>, f64) {
        let grams = ngrams(tokens, n);
        let mut v = BTreeMap::new();
        for (g, tf) in grams {
            let w = tf as f64 * self.idf(&g);
            v.insert(g, w);
        }
        let norm = v.values().map(|w| w * w).sum::<f64>().sqrt();
        (v, norm)
    }
}

/// Mean over n = 1..4 of the average tf-idf cosine to each reference,
/// scaled by 10.
pub fn cider(candidate: &[String], references: &[Vec<String>], idf: &CiderIdf) -> f64 {
    if candidate.is_empty() || references.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for n in 1..=MAX_ORDER {
        let (cv, cn) = idf.vector(candidate, n);
        let mut sum = 0.0;
        for r in references {
            let (rv, rn) = idf.vector(r, n);
            if cn > 0.0 && rn > 0.0 {
                let dot: f64 = cv.iter().filter_map(|(g, w)| rv.get(g).map(|x| w * x)).sum();
                sum += dot / (cn * rn);
            }
        }
        total += sum / references.len() as f64;
    }
    CIDER_SCALE * total / MAX_ORDER as f64
}

/// All caption metrics for one candidate. An empty candidate scores zero.
pub fn caption_metrics<S: AsRef<str>>(candidate: &str, references: &[S], idf: &CiderIdf) -> CaptionScores {
    let cand = tokenize(candidate);
    let refs: Vec<Vec<String>> = references.iter().map(|r| tokenize(r.as_ref())).collect();
    if cand.is_empty() || refs.iter().all(Vec::is_empty) {
        return CaptionScores::default();
    }
    let stats = BleuStats::compute(&cand, &refs);
    CaptionScores {
        bleu: stats.bleu(),
        bleu4: stats.bleu4(),
        meteor_lite: meteor_lite(&cand, &refs),
        rouge_l: rouge_l(&cand, &refs),
        cider: cider(&cand, &refs, idf),
    }
}

/// Corpus-level BLEU from summed statistics, over up to four orders.
pub fn corpus_bleu<S: AsRef<str>>(candidates: &[S], references: &[Vec<S>]) -> f64 {
    let mut total = BleuStats::default();
    let mut longest = 0;
    for (c, refs) in candidates.iter().zip(references) {
        let cand = tokenize(c.as_ref());
        longest = longest.max(cand.len());
        let refs: Vec<Vec<String>> = refs.iter().map(|r| tokenize(r.as_ref())).collect();
        total.merge(&BleuStats::compute(&cand, &refs));
    }
    total.score(longest.min(MAX_ORDER))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        tokenize(s)
    }

    #[test]
    fn identity() {
        let idf = CiderIdf::from_references(&[vec![toks("a calm piano piece")], vec![toks("loud rock song")]]);
        let s = caption_metrics("a calm piano piece", &["a calm piano piece"], &idf);
        assert!((s.bleu - 1.0).abs() < 1e-12);
        assert!((s.bleu4 - 1.0).abs() < 1e-12);
        assert!((s.rouge_l - 1.0).abs() < 1e-12);
        assert!(s.cider > 0.0);
        let short = caption_metrics("jazz", &["jazz"], &idf);
        assert_eq!(short.bleu, 1.0);
        assert_eq!(short.bleu4, 0.0);
        assert_eq!(short.rouge_l, 1.0);
    }

    #[test]
    fn disjoint_is_zero() {
        let idf = CiderIdf::from_references(&[vec![toks("a calm piano piece")], vec![toks("x")]]);
        let s = caption_metrics("loud metal riffs", &["a calm piano piece"], &idf);
        assert_eq!(s, CaptionScores::default());
        assert_eq!(caption_metrics("", &["a b"], &idf), CaptionScores::default());
    }

    #[test]
    fn brevity_penalty_example() {
        let stats = BleuStats::compute(&toks("the cat sat"), &[toks("the cat sat down")]);
        assert_eq!(stats.precisions()[0], 1.0);
        let expected = (1.0f64 - 4.0 / 3.0).exp();
        assert!((stats.brevity_penalty() - expected).abs() < 1e-12);
        assert!((stats.bleu() - expected).abs() < 1e-12);
    }

    #[test]
    fn clipped_counts() {
        let stats = BleuStats::compute(&toks("the the the the"), &[toks("the cat")]);
        assert_eq!(stats.matches[0], 1);
        assert_eq!(stats.precisions()[0], 0.25);
    }

    #[test]
    fn meteor_uses_stems_and_fragmentation() {
        let exact = meteor_lite(&toks("guitars playing"), &[toks("guitars playing")]);
        let stemmed = meteor_lite(&toks("guitar played"), &[toks("guitars playing")]);
        assert!(exact > 0.0);
        assert!((stemmed - exact).abs() < 1e-12);
        let ordered = meteor_lite(&toks("a b c d"), &[toks("a b c d")]);
        let scrambled = meteor_lite(&toks("d c b a"), &[toks("a b c d")]);
        assert!(ordered > scrambled);
    }

    #[test]
    fn corpus_bleu_pools_counts() {
        let c = ["the cat sat on the mat", "a dog"];
        let r = [vec!["the cat sat on the mat"], vec!["a dog barks"]];
        let b = corpus_bleu(&c, &r);
        assert!(b > 0.0 && b < 1.0);
    }

    proptest! {
        #[test]
        fn scores_are_bounded(
            cand in "[a-e ]{0,30}",
            refs in prop::collection::vec("[a-e ]{1,30}", 1..4),
        ) {
            let corpus: Vec<Vec<Vec<String>>> = refs.iter().map(|r| vec![toks(r)]).collect();
            let idf = CiderIdf::from_references(&corpus);
            let s = caption_metrics(&cand, &refs, &idf);
            for v in [s.bleu, s.bleu4, s.meteor_lite, s.rouge_l] {
                prop_assert!((0.0..=1.0 + 1e-12).contains(&v), "{s:?}");
            }
            prop_assert!((0.0..=CIDER_SCALE + 1e-9).contains(&s.cider), "{s:?}");
        }
    }
}
