use serde_json::{json, Map, Value};

use crate::corpus::TrackRecord;
use crate::mir::AugmentedMetadata;

/// Field names of the estimated features in a metadata document.
pub const AUGMENTED_KEYS: [&str; 4] = ["tempo_bpm", "key", "beats", "chords"];

/// Native field names that describe the same feature as an augmented one.
const COLLISIONS: [(&str, &[&str]); 4] = [
    ("tempo_bpm", &["tempo", "bpm", "tempo_bpm"]),
    ("key", &["key", "key_mode", "tonality"]),
    ("beats", &["beats", "beat_grid", "downbeats"]),
    ("chords", &["chords", "chord", "chord_progression"]),
];

fn round_to(v: f64, places: i32) -> f64 {
    let scale = 10f64.powi(places);
    (v * scale).round() / scale
}

fn augmented_value(key: &str, aug: &AugmentedMetadata) -> Value {
    match key {
        "tempo_bpm" => json!(round_to(aug.tempo_bpm, 1)),
        "key" => json!(aug.key.to_string()),
        "beats" => Value::Array(
            aug.beat_grid
                .beats
                .iter()
                .map(|b| json!([round_to(b.time_s, 2), b.beat_number]))
                .collect(),
        ),
        "chords" => Value::Array(
            aug.chords
                .iter()
                .map(|c| json!([round_to(c.start_s, 2), round_to(c.end_s, 2), c.label.to_string()]))
                .collect(),
        ),
        _ => unreachable!("not an augmented key: {key}"),
    }
}

/// Merges native annotations with the estimated features.
///
/// Keys come out sorted. When a native field names the same feature as an
/// estimated one, both survive as `native.<name>` and `augmented.<name>`.
pub fn build_metadata_doc(record: &TrackRecord, aug: &AugmentedMetadata) -> Value {
    let mut doc = Map::new();
    let mut clashes = [false; 4];
    for (name, value) in &record.annotations {
        let lower = name.to_ascii_lowercase();
        match COLLISIONS.iter().position(|(_, natives)| natives.contains(&lower.as_str())) {
            Some(i) => {
                clashes[i] = true;
                doc.insert(format!("native.{name}"), value.clone());
            }
            None => {
                doc.insert(name.clone(), value.clone());
            }
        }
    }
    for (i, (key, _)) in COLLISIONS.iter().enumerate() {
        let name = if clashes[i] {
            format!("augmented.{key}")
        } else {
            key.to_string()
        };
        doc.insert(name, augmented_value(key, aug));
    }
    Value::Object(doc)
}

/// Compact single-line JSON; `serde_json` maps are ordered, so this is
/// deterministic.
pub fn render_doc(doc: &Value) -> String {
    serde_json::to_string(doc).expect("metadata documents are plain JSON")
}
