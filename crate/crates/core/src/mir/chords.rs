use super::chroma::ChromaMapper;
use super::{Analysis, ChordLabel, ChordSegment, MirConfig, MirError, Mode};
use crate::audio::AudioClip;

const MIN_SECONDS: f64 = 2.0;
/// Scale from template cosine similarity to log emission score.
const EMISSION_SCALE: f64 = 10.0;
/// Cosine similarity at which an energetic frame is as likely "N" as a chord.
const NO_CHORD_SIMILARITY: f64 = 0.5;

pub fn recognize_chords(clip: &AudioClip) -> Result<Vec<ChordSegment>, MirError> {
    recognize_chords_with(clip, &MirConfig::default())
}

pub fn recognize_chords_with(
    clip: &AudioClip,
    config: &MirConfig,
) -> Result<Vec<ChordSegment>, MirError> {
    recognize_from(&Analysis::new(clip), config)
}

fn template(label: ChordLabel) -> Option<[f64; 12]> {
    let ChordLabel::Triad { root, mode } = label else {
        return None;
    };
    let third = match mode {
        Mode::Major => 4,
        Mode::Minor => 3,
    };
    let mut t = [0.0; 12];
    for interval in [0, third, 7] {
        t[(root as usize + interval) % 12] = 1.0 / 3f64.sqrt();
    }
    Some(t)
}

fn cosine(chroma: &[f64; 12], unit_template: &[f64; 12]) -> f64 {
    let norm = chroma.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm <= 0.0 {
        return 0.0;
    }
    chroma.iter().zip(unit_template).map(|(a, b)| a * b).sum::<f64>() / norm
}

pub(crate) fn recognize_from(
    analysis: &Analysis,
    config: &MirConfig,
) -> Result<Vec<ChordSegment>, MirError> {
    analysis.require(MIN_SECONDS)?;
    let spec = &analysis.spec;
    let mapper = ChromaMapper::new(spec.sample_rate, spec.n_fft);
    let vocab = ChordLabel::vocabulary();
    let templates: Vec<Option<[f64; 12]>> = vocab.iter().map(|l| template(*l)).collect();
    let n_states = vocab.len();
    let no_chord = n_states - 1;

    let emissions: Vec<Vec<f64>> = (0..spec.n_frames())
        .map(|t| {
            if spec.frame_rms(t) < config.chord_energy_floor {
                let mut e = vec![f64::NEG_INFINITY; n_states];
                e[no_chord] = 0.0;
                return e;
            }
            let chroma = mapper.frame(&spec.frames[t]);
            templates
                .iter()
                .map(|tpl| match tpl {
                    Some(tpl) => EMISSION_SCALE * cosine(&chroma, tpl),
                    None => EMISSION_SCALE * NO_CHORD_SIMILARITY,
                })
                .collect()
        })
        .collect();

    let path = viterbi(&emissions, config.chord_self_transition);
    Ok(segments(&path, &vocab, spec.frame_time(1.0), analysis.duration_s))
}

/// Most likely state path under a uniform-switch transition model with a
/// single self-transition probability. Ties resolve to the lowest state.
fn viterbi(emissions: &[Vec<f64>], self_prob: f64) -> Vec<usize> {
    let Some(first) = emissions.first() else {
        return Vec::new();
    };
    let n_states = first.len();
    let stay = self_prob.clamp(1e-9, 1.0 - 1e-9).ln();
    let switch = ((1.0 - self_prob.clamp(1e-9, 1.0 - 1e-9)) / (n_states - 1) as f64).ln();

    let mut delta: Vec<f64> = first.clone();
    let mut back: Vec<Vec<usize>> = Vec::with_capacity(emissions.len());
    back.push(vec![0; n_states]);
    for e in &emissions[1..] {
        // Best predecessor overall, for the switch branch.
        let mut best_prev = 0;
        for s in 1..n_states {
            if delta[s] > delta[best_prev] {
                best_prev = s;
            }
        }
        let mut next = vec![0.0; n_states];
        let mut ptr = vec![0; n_states];
        for s in 0..n_states {
            let via_stay = delta[s] + stay;
            let via_switch = delta[best_prev] + switch;
            let (score, from) = if best_prev == s || via_stay >= via_switch {
                (via_stay, s)
            } else {
                (via_switch, best_prev)
            };
            next[s] = score + e[s];
            ptr[s] = from;
        }
        delta = next;
        back.push(ptr);
    }

    let mut state = 0;
    for s in 1..n_states {
        if delta[s] > delta[state] {
            state = s;
        }
    }
    let mut path = vec![state; emissions.len()];
    for t in (1..emissions.len()).rev() {
        state = back[t][state];
        path[t - 1] = state;
    }
    path
}

/// Merges per-frame labels into segments tiling `[0, duration)`.
fn segments(
    path: &[usize],
    vocab: &[ChordLabel],
    frame_period: f64,
    duration: f64,
) -> Vec<ChordSegment> {
    let mut out: Vec<ChordSegment> = Vec::new();
    for (t, state) in path.iter().enumerate() {
        let label = vocab[*state];
        let start = if t == 0 { 0.0 } else { (t as f64 - 0.5) * frame_period };
        if start >= duration {
            break;
        }
        match out.last_mut() {
            Some(seg) if seg.label == label => {}
            Some(seg) => {
                seg.end_s = start;
                out.push(ChordSegment {
                    start_s: start,
                    end_s: duration,
                    label,
                });
            }
            None => out.push(ChordSegment {
                start_s: 0.0,
                end_s: duration,
                label,
            }),
        }
    }
    if out.is_empty() {
        out.push(ChordSegment {
            start_s: 0.0,
            end_s: duration,
            label: ChordLabel::NoChord,
        });
    }
    out
}
