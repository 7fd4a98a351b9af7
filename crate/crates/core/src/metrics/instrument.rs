use std::collections::BTreeSet;
use std::sync::LazyLock;

use regex::Regex;

/// `(surface form, canonical instrument)`. Canonical names follow the
/// General MIDI program families, plus `drums` and `vocals`. Guitar-like
/// plucked instruments fold into `guitar`.
const SYNONYMS: &[(&str, &str)] = &[
    ("acoustic grand piano", "piano"),
    ("grand piano", "piano"),
    ("upright piano", "piano"),
    ("piano", "piano"),
    ("keyboard", "piano"),
    ("keys", "piano"),
    ("electric piano", "electric piano"),
    ("rhodes", "electric piano"),
    ("harpsichord", "harpsichord"),
    ("clavinet", "clavinet"),
    ("celesta", "celesta"),
    ("glockenspiel", "glockenspiel"),
    ("music box", "music box"),
    ("vibraphone", "vibraphone"),
    ("marimba", "marimba"),
    ("xylophone", "xylophone"),
    ("tubular bells", "tubular bells"),
    ("dulcimer", "dulcimer"),
    ("organ", "organ"),
    ("hammond organ", "organ"),
    ("pipe organ", "organ"),
    ("church organ", "organ"),
    ("accordion", "accordion"),
    ("harmonica", "harmonica"),
    ("bandoneon", "accordion"),
    ("guitar", "guitar"),
    ("acoustic guitar", "guitar"),
    ("electric guitar", "guitar"),
    ("classical guitar", "guitar"),
    ("nylon guitar", "guitar"),
    ("steel guitar", "guitar"),
    ("lap steel guitar", "guitar"),
    ("lap steel", "guitar"),
    ("pedal steel", "guitar"),
    ("slide guitar", "guitar"),
    ("distorted guitar", "guitar"),
    ("twelve string guitar", "guitar"),
    ("mandolin", "guitar"),
    ("ukulele", "guitar"),
    ("bass", "bass"),
    ("bass guitar", "bass"),
    ("electric bass", "bass"),
    ("acoustic bass", "bass"),
    ("synth bass", "bass"),
    ("fretless bass", "bass"),
    ("double bass", "contrabass"),
    ("upright bass", "contrabass"),
    ("contrabass", "contrabass"),
    ("violin", "violin"),
    ("fiddle", "violin"),
    ("viola", "viola"),
    ("cello", "cello"),
    ("violoncello", "cello"),
    ("harp", "harp"),
    ("timpani", "timpani"),
    ("strings", "strings"),
    ("string section", "strings"),
    ("string ensemble", "strings"),
    ("orchestra", "strings"),
    ("choir", "choir"),
    ("trumpet", "trumpet"),
    ("trombone", "trombone"),
    ("tuba", "tuba"),
    ("french horn", "french horn"),
    ("horn", "french horn"),
    ("brass", "brass"),
    ("brass section", "brass"),
    ("saxophone", "saxophone"),
    ("sax", "saxophone"),
    ("alto saxophone", "saxophone"),
    ("tenor saxophone", "saxophone"),
    ("oboe", "oboe"),
    ("english horn", "english horn"),
    ("bassoon", "bassoon"),
    ("clarinet", "clarinet"),
    ("piccolo", "piccolo"),
    ("flute", "flute"),
    ("recorder", "recorder"),
    ("pan flute", "pan flute"),
    ("ocarina", "ocarina"),
    ("synthesizer", "synthesizer"),
    ("synth", "synthesizer"),
    ("synth pad", "synthesizer"),
    ("synth lead", "synthesizer"),
    ("sitar", "sitar"),
    ("banjo", "banjo"),
    ("shamisen", "shamisen"),
    ("koto", "koto"),
    ("kalimba", "kalimba"),
    ("bagpipe", "bagpipe"),
    ("bagpipes", "bagpipe"),
    ("steel drums", "steel drums"),
    ("drums", "drums"),
    ("drum", "drums"),
    ("drum kit", "drums"),
    ("drum set", "drums"),
    ("drum machine", "drums"),
    ("percussion", "drums"),
    ("snare", "drums"),
    ("snare drum", "drums"),
    ("kick drum", "drums"),
    ("hi-hat", "drums"),
    ("hihat", "drums"),
    ("cymbal", "drums"),
    ("cymbals", "drums"),
    ("tambourine", "drums"),
    ("congas", "drums"),
    ("bongos", "drums"),
    ("vocals", "vocals"),
    ("vocal", "vocals"),
    ("voice", "vocals"),
    ("voices", "vocals"),
    ("singer", "vocals"),
    ("singing", "vocals"),
    ("lead vocals", "vocals"),
    ("backing vocals", "vocals"),
    ("male vocals", "vocals"),
    ("female vocals", "vocals"),
];

static SEPARATORS: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\s*(?:,|;|/|&|\+|\n|\band\b|\bwith\b|\bplus\b)\s*").unwrap());

/// One regex over every surface form, longest first, each allowing a
/// plural `s`.
static MATCHER: LazyLock<Regex> = LazyLock::new(|| {
    let mut forms: Vec<&str> = SYNONYMS.iter().map(|(s, _)| *s).collect();
    forms.sort_by(|a, b| b.len().cmp(&a.len()).then(a.cmp(b)));
    let alternation = forms
        .iter()
        .map(|f| regex::escape(f).replace(' ', r"[\s-]+"))
        .collect::<Vec<_>>()
        .join("|");
    Regex::new(&format!(r"(?i)\b(?:{alternation})s?\b")).unwrap()
});

fn canonical(surface: &str) -> Option<&'static str> {
    let folded = surface.to_lowercase().replace('-', " ");
    let folded = folded.split_whitespace().collect::<Vec<_>>().join(" ");
    let lookup = |s: &str| SYNONYMS.iter().find(|(f, _)| f.replace('-', " ") == s).map(|(_, c)| *c);
    lookup(&folded).or_else(|| folded.strip_suffix('s').and_then(lookup))
}

/// Canonical instruments mentioned in free text. Unknown names are dropped.
pub fn normalise_instruments(text: &str) -> BTreeSet<&'static str> {
    let mut out = BTreeSet::new();
    for chunk in SEPARATORS.split(text) {
        for m in MATCHER.find_iter(chunk) {
            if let Some(c) = canonical(m.as_str()) {
                out.insert(c);
            }
        }
    }
    out
}

pub fn normalise_labels<S: AsRef<str>>(labels: &[S]) -> BTreeSet<&'static str> {
    labels.iter().flat_map(|l| normalise_instruments(l.as_ref())).collect()
}

/// F1 between two canonical sets; two empty sets score 1.
pub fn set_f1(predicted: &BTreeSet<&str>, truth: &BTreeSet<&str>) -> f64 {
    if predicted.is_empty() && truth.is_empty() {
        return 1.0;
    }
    let hits = predicted.intersection(truth).count() as f64;
    2.0 * hits / (predicted.len() + truth.len()) as f64
}

pub fn instrument_f1<S: AsRef<str>>(predicted_text: &str, true_instruments: &[S]) -> f64 {
    set_f1(&normalise_instruments(predicted_text), &normalise_labels(true_instruments))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert_eq!(instrument_f1("guitar, drums", &["guitar", "drums"]), 1.0);
        assert_eq!(instrument_f1("lap steel guitar and drums", &["guitar", "drums"]), 1.0);
        assert_eq!(instrument_f1("mandolin & percussion", &["guitar", "drums"]), 1.0);
        assert_eq!(instrument_f1("", &Vec::<String>::new()), 1.0);
        assert_eq!(instrument_f1("kazoo", &["piano"]), 0.0);
    }

    #[test]
    fn longest_form_wins() {
        let s = normalise_instruments("bass guitar, electric guitars and a double bass");
        assert_eq!(s, BTreeSet::from(["bass", "contrabass", "guitar"]));
        let v = normalise_instruments("male vocals with backing vocals");
        assert_eq!(v, BTreeSet::from(["vocals"]));
    }

    #[test]
    fn unknown_names_are_dropped() {
        assert_eq!(normalise_instruments("theremin and kazoo, piano"), BTreeSet::from(["piano"]));
    }

    #[test]
    fn partial_overlap() {
        let f1 = instrument_f1("piano, violin", &["piano", "cello"]);
        assert!((f1 - 0.5).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn dropping_a_correct_instrument_never_helps(
            picks in prop::collection::btree_set(0usize..12, 1..6),
            truth in prop::collection::btree_set(0usize..12, 0..6),
        ) {
            let names = ["piano", "organ", "guitar", "bass", "violin", "viola", "cello", "harp", "trumpet", "flute", "drums", "vocals"];
            let pred: Vec<&str> = picks.iter().map(|i| names[*i]).collect();
            let truth: Vec<&str> = truth.iter().map(|i| names[*i]).collect();
            let full = instrument_f1(&pred.join(", "), &truth);
            prop_assert_eq!(full, instrument_f1(&truth.join(", "), &pred));
            for drop in &pred {
                if truth.contains(drop) {
                    let fewer: Vec<&str> = pred.iter().copied().filter(|p| p != drop).collect();
                    prop_assert!(instrument_f1(&fewer.join(", "), &truth) <= full + 1e-12);
                }
            }
        }
    }
}
