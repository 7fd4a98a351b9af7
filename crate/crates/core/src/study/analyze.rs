use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::{AnswerKey, Judgment, StudyError, StudyItem, LIKERT_MIDPOINT};

pub const LIKERT_RULE: &str =
    "pairwise: rating below 4 favours option 1, above 4 favours option 2, 4 is excluded; win rate = wins / (wins + losses)";
pub const SCREENING_RULE: &str =
    "screening: an item is dropped when a strict majority of its raters answered that the clip is not only music";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WinTally {
    pub wins: usize,
    pub losses: usize,
    pub excluded: usize,
    pub win_rate: Option<f64>,
}

impl WinTally {
    fn record(&mut self, outcome: Option<bool>) {
        match outcome {
            Some(true) => self.wins += 1,
            Some(false) => self.losses += 1,
            None => self.excluded += 1,
        }
        let decided = self.wins + self.losses;
        self.win_rate = (decided > 0).then(|| self.wins as f64 / decided as f64);
    }

    pub fn decisions(&self) -> usize {
        self.wins + self.losses
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AccuracyTally {
    pub correct: usize,
    pub total: usize,
    pub accuracy: Option<f64>,
}

impl AccuracyTally {
    fn record(&mut self, correct: bool) {
        self.total += 1;
        self.correct += usize::from(correct);
        self.accuracy = Some(self.correct as f64 / self.total as f64);
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PairwiseReport {
    pub items: usize,
    pub screened_out: usize,
    pub overall: WinTally,
    pub by_baseline: BTreeMap<String, WinTally>,
    pub zero_effective_sample: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchingReport {
    pub chance: f64,
    pub overall: AccuracyTally,
    /// model -> prompt -> accuracy.
    pub by_model: BTreeMap<String, BTreeMap<String, AccuracyTally>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct JudgeReport {
    pub overall: WinTally,
    pub by_opponent: BTreeMap<String, WinTally>,
    /// Judged items whose two responses are identical.
    pub tie_eligible: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub rules: Vec<String>,
    pub judgments: usize,
    /// subject model -> report.
    pub pairwise: BTreeMap<String, PairwiseReport>,
    pub matching: Option<MatchingReport>,
    /// subject model -> report.
    pub judge: BTreeMap<String, JudgeReport>,
}

/// Folds judgments into per-study summaries. The result does not depend on
/// judgment order.
pub fn analyze(items: &[StudyItem], judgments: &[Judgment]) -> Result<StudyReport, StudyError> {
    let by_id: BTreeMap<&str, &StudyItem> = items.iter().map(|i| (i.item_id.as_str(), i)).collect();
    let mut per_item: BTreeMap<&str, BTreeMap<&str, &Judgment>> = BTreeMap::new();
    for j in judgments {
        let item = by_id.get(j.item_id.as_str()).ok_or_else(|| StudyError::OrphanJudgment {
            item_id: j.item_id.clone(),
        })?;
        item.check_value(j.value)?;
        if per_item
            .entry(item.item_id.as_str())
            .or_default()
            .insert(j.rater_id.as_str(), j)
            .is_some()
        {
            return Err(StudyError::DuplicateJudgment {
                item_id: j.item_id.clone(),
                rater_id: j.rater_id.clone(),
            });
        }
    }

    let mut report = StudyReport {
        rules: vec![LIKERT_RULE.into(), SCREENING_RULE.into()],
        judgments: judgments.len(),
        ..Default::default()
    };
    let mut pairwise_items: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for item in items {
        let raters = per_item.get(item.item_id.as_str());
        match &item.answer_key {
            AnswerKey::Pairwise { subject, option_models } => {
                pairwise_items.entry(subject).or_default().insert(&item.item_id);
                let entry = report.pairwise.entry(subject.clone()).or_default();
                let Some(raters) = raters else { continue };
                let not_music = raters.values().filter(|j| j.screening_answer == Some(false)).count();
                if item.screening_enabled && 2 * not_music > raters.len() {
                    entry.screened_out += 1;
                    continue;
                }
                let baseline = option_models.iter().find(|m| *m != subject).unwrap_or(subject);
                for j in raters.values() {
                    let favoured = match j.value.cmp(&LIKERT_MIDPOINT) {
                        std::cmp::Ordering::Less => Some(0),
                        std::cmp::Ordering::Greater => Some(1),
                        std::cmp::Ordering::Equal => None,
                    };
                    let outcome = favoured.map(|k| option_models[k] == *subject);
                    entry.overall.record(outcome);
                    entry.by_baseline.entry(baseline.clone()).or_default().record(outcome);
                }
            }
            AnswerKey::Match { model, correct, .. } => {
                let m = report.matching.get_or_insert_with(|| MatchingReport {
                    chance: 1.0 / 3.0,
                    ..Default::default()
                });
                for j in raters.into_iter().flat_map(|r| r.values()) {
                    let hit = j.value as usize == *correct;
                    m.overall.record(hit);
                    m.by_model
                        .entry(model.clone())
                        .or_default()
                        .entry(item.prompt.clone())
                        .or_default()
                        .record(hit);
                }
            }
            AnswerKey::Judge { subject, option_models } => {
                let entry = report.judge.entry(subject.clone()).or_default();
                let Some(raters) = raters else { continue };
                let opponent = option_models.iter().find(|m| *m != subject).unwrap_or(subject);
                if item.options[0] == item.options[1] {
                    entry.tie_eligible += 1;
                }
                for j in raters.values() {
                    let outcome = Some(option_models[j.value as usize] == *subject);
                    entry.overall.record(outcome);
                    entry.by_opponent.entry(opponent.clone()).or_default().record(outcome);
                }
            }
        }
    }
    for (subject, ids) in pairwise_items {
        let entry = report.pairwise.get_mut(subject).expect("inserted above");
        entry.items = ids.len();
        entry.zero_effective_sample = entry.overall.decisions() == 0;
    }
    Ok(report)
}

fn rate(x: Option<f64>) -> String {
    x.map_or_else(|| "n/a".into(), |v| format!("{v:.3}"))
}

impl StudyReport {
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        for rule in &self.rules {
            let _ = writeln!(out, "# {rule}");
        }
        for (subject, p) in &self.pairwise {
            let _ = writeln!(
                out,
                "pairwise {subject}: items {} screened_out {} wins {} losses {} excluded {} win_rate {}{}",
                p.items,
                p.screened_out,
                p.overall.wins,
                p.overall.losses,
                p.overall.excluded,
                rate(p.overall.win_rate),
                if p.zero_effective_sample { " (zero effective sample)" } else { "" }
            );
            for (baseline, t) in &p.by_baseline {
                let _ = writeln!(out, "  vs {baseline}: {}/{} win_rate {}", t.wins, t.decisions(), rate(t.win_rate));
            }
        }
        if let Some(m) = &self.matching {
            let _ = writeln!(
                out,
                "matching: {}/{} accuracy {} (chance {:.3})",
                m.overall.correct,
                m.overall.total,
                rate(m.overall.accuracy),
                m.chance
            );
            for (model, prompts) in &m.by_model {
                for (prompt, t) in prompts {
                    let _ = writeln!(out, "  {model} | {prompt}: {}/{} accuracy {}", t.correct, t.total, rate(t.accuracy));
                }
            }
        }
        for (subject, r) in &self.judge {
            let _ = writeln!(
                out,
                "judge {subject}: {}/{} win_rate {} tie_eligible {}",
                r.overall.wins,
                r.overall.decisions(),
                rate(r.overall.win_rate),
                r.tie_eligible
            );
            for (opp, t) in &r.by_opponent {
                let _ = writeln!(out, "  vs {opp}: {}/{} win_rate {}", t.wins, t.decisions(), rate(t.win_rate));
            }
        }
        out
    }
}
