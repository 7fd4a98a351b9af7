use std::collections::BTreeMap;

use rand::seq::{index, SliceRandom};
use rand::Rng;

use super::{AnswerKey, ItemKind, StudyError, StudyItem};
use crate::metrics::ModelOutput;
use crate::rng::keyed_rng;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairwiseConfig {
    pub subject: String,
    pub n_pairs: usize,
    /// Attach the "only music?" screening question to every item.
    pub screening: bool,
    pub seed: u64,
}

fn by_clip(outputs: &[ModelOutput]) -> BTreeMap<&str, &ModelOutput> {
    let mut map = BTreeMap::new();
    for o in outputs {
        map.entry(o.clip_ref.as_str()).or_insert(o);
    }
    map
}

/// Pairs the subject model against baselines on shared clips.
///
/// Clips are visited in shuffled round-robin order and each visit draws a
/// baseline not yet paired with that clip, so pairs are sampled without
/// replacement from clips x baselines.
pub fn build_pairwise_study(
    outputs_by_model: &BTreeMap<String, Vec<ModelOutput>>,
    config: &PairwiseConfig,
) -> Result<Vec<StudyItem>, StudyError> {
    let subject = outputs_by_model
        .get(&config.subject)
        .map(|o| by_clip(o))
        .ok_or_else(|| StudyError::InsufficientOutputs(format!("no outputs for subject {}", config.subject)))?;
    let baselines: BTreeMap<&str, BTreeMap<&str, &ModelOutput>> = outputs_by_model
        .iter()
        .filter(|(m, _)| **m != config.subject)
        .map(|(m, o)| (m.as_str(), by_clip(o)))
        .collect();

    let mut pools: Vec<(&str, Vec<&str>)> = subject
        .keys()
        .map(|clip| {
            let avail: Vec<&str> = baselines
                .iter()
                .filter(|(_, outs)| outs.contains_key(clip))
                .map(|(m, _)| *m)
                .collect();
            (*clip, avail)
        })
        .filter(|(_, avail)| !avail.is_empty())
        .collect();
    let available: usize = pools.iter().map(|(_, a)| a.len()).sum();
    if config.n_pairs > available {
        return Err(StudyError::InsufficientOutputs(format!(
            "{} pairs requested but only {available} clip/baseline pairs share coverage with {}",
            config.n_pairs, config.subject
        )));
    }

    let mut rng = keyed_rng(config.seed, "pairwise");
    pools.shuffle(&mut rng);
    let mut picks = Vec::with_capacity(config.n_pairs);
    'rounds: while picks.len() < config.n_pairs {
        for (clip, avail) in pools.iter_mut() {
            if picks.len() == config.n_pairs {
                break 'rounds;
            }
            if avail.is_empty() {
                continue;
            }
            let baseline = avail.remove(rng.random_range(0..avail.len()));
            picks.push((*clip, baseline));
        }
    }

    let items = picks
        .into_iter()
        .enumerate()
        .map(|(i, (clip, baseline))| {
            let mine = subject[clip];
            let theirs = baselines[baseline][clip];
            let mut sides = [(config.subject.clone(), mine.text.clone()), (baseline.to_string(), theirs.text.clone())];
            if rng.random_bool(0.5) {
                sides.swap(0, 1);
            }
            let [(m0, t0), (m1, t1)] = sides;
            StudyItem {
                item_id: format!("pair-{i:05}"),
                kind: ItemKind::PairwiseCaption,
                audio_ref: clip.to_string(),
                prompt: mine.prompt.clone(),
                options: vec![t0, t1],
                answer_key: AnswerKey::Pairwise {
                    subject: config.subject.clone(),
                    option_models: [m0, m1],
                },
                screening_enabled: config.screening,
            }
        })
        .collect();
    Ok(items)
}

/// One item per (model, prompt, clip): the clip's own response plus two
/// responses by the same model to the same prompt on other clips.
pub fn build_matching_study(
    outputs_by_model: &BTreeMap<String, Vec<ModelOutput>>,
    seed: u64,
) -> Result<Vec<StudyItem>, StudyError> {
    let mut groups: BTreeMap<(&str, &str), BTreeMap<&str, &str>> = BTreeMap::new();
    for (model, outputs) in outputs_by_model {
        for o in outputs {
            groups
                .entry((model.as_str(), o.prompt.as_str()))
                .or_default()
                .entry(o.clip_ref.as_str())
                .or_insert(o.text.as_str());
        }
    }
    if groups.is_empty() {
        return Err(StudyError::InsufficientOutputs("no outputs".into()));
    }
    if let Some(((model, prompt), clips)) = groups.iter().find(|(_, clips)| clips.len() < 3) {
        return Err(StudyError::InsufficientOutputs(format!(
            "model {model} prompt {prompt:?} covers {} clips, need at least 3",
            clips.len()
        )));
    }

    let mut items = Vec::new();
    for ((model, prompt), clips) in &groups {
        let entries: Vec<(&str, &str)> = clips.iter().map(|(c, t)| (*c, *t)).collect();
        for (i, (clip, text)) in entries.iter().enumerate() {
            let mut rng = keyed_rng(seed, &format!("match\u{0}{model}\u{0}{prompt}\u{0}{clip}"));
            let others: Vec<usize> = (0..entries.len()).filter(|j| *j != i).collect();
            let mut options: Vec<(&str, &str)> = vec![(clip, text)];
            options.extend(index::sample(&mut rng, others.len(), 2).iter().map(|k| entries[others[k]]));
            options.shuffle(&mut rng);
            let correct = options.iter().position(|(c, _)| c == clip).expect("true response present");
            items.push(StudyItem {
                item_id: format!("match-{:05}", items.len()),
                kind: ItemKind::AudioTextMatch,
                audio_ref: clip.to_string(),
                prompt: prompt.to_string(),
                options: options.iter().map(|(_, t)| t.to_string()).collect(),
                answer_key: AnswerKey::Match {
                    model: model.to_string(),
                    correct,
                    option_audio: [0, 1, 2].map(|k| options[k].0.to_string()),
                },
                screening_enabled: false,
            });
        }
    }
    Ok(items)
}

/// Samples `n` (clip, prompt) pairs answered by both models, each with a
/// coin-flip presentation order. Model A is the subject.
pub fn build_llm_detail_items(
    model_a: &str,
    outputs_a: &[ModelOutput],
    model_b: &str,
    outputs_b: &[ModelOutput],
    n: usize,
    seed: u64,
) -> Result<Vec<StudyItem>, StudyError> {
    let key = |o: &ModelOutput| (o.clip_ref.clone(), o.prompt.clone());
    let mut b_map = BTreeMap::new();
    for o in outputs_b {
        b_map.entry(key(o)).or_insert(o);
    }
    let mut shared: BTreeMap<(String, String), (&ModelOutput, &ModelOutput)> = BTreeMap::new();
    for a in outputs_a {
        if let Some(b) = b_map.get(&key(a)) {
            shared.entry(key(a)).or_insert((a, *b));
        }
    }
    if n > shared.len() {
        return Err(StudyError::InsufficientOutputs(format!(
            "{n} judge items requested but {model_a} and {model_b} share {} outputs",
            shared.len()
        )));
    }
    let mut rng = keyed_rng(seed, "llm_detail");
    let mut pairs: Vec<(&ModelOutput, &ModelOutput)> = shared.into_values().collect();
    pairs.shuffle(&mut rng);
    pairs.truncate(n);
    let items = pairs
        .into_iter()
        .enumerate()
        .map(|(i, (a, b))| {
            let mut sides = [(model_a.to_string(), a.text.clone()), (model_b.to_string(), b.text.clone())];
            if rng.random_bool(0.5) {
                sides.swap(0, 1);
            }
            let [(m0, t0), (m1, t1)] = sides;
            StudyItem {
                item_id: format!("judge-{i:05}"),
                kind: ItemKind::LlmDetail,
                audio_ref: a.clip_ref.clone(),
                prompt: a.prompt.clone(),
                options: vec![t0, t1],
                answer_key: AnswerKey::Judge {
                    subject: model_a.to_string(),
                    option_models: [m0, m1],
                },
                screening_enabled: false,
            }
        })
        .collect();
    Ok(items)
}
