use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::InstructionRecord;
use crate::corpus::TaskFamily;
use crate::rng::{keyed_rng, sha256_hex};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackConfig {
    pub shard_size: usize,
    pub seed: u64,
}

impl Default for PackConfig {
    fn default() -> Self {
        Self {
            shard_size: 10_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShardInfo {
    pub file: String,
    pub records: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackManifest {
    pub total: usize,
    pub shard_size: usize,
    pub seed: u64,
    pub shards: Vec<ShardInfo>,
    /// dataset -> task family -> records.
    pub counts: BTreeMap<String, BTreeMap<TaskFamily, usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Writes `shard-NNNNN.jsonl` files and `manifest.json` into `out_dir`.
///
/// Records are sorted by id and then shuffled under the seed, so the output
/// does not depend on input order.
pub fn pack_dataset(
    mut records: Vec<InstructionRecord>,
    out_dir: &Path,
    config: &PackConfig,
    config_hash: Option<String>,
) -> std::io::Result<PackManifest> {
    if config.shard_size == 0 {
        return Err(std::io::Error::new(std::io::ErrorKind::InvalidInput, "shard size must be positive"));
    }
    std::fs::create_dir_all(out_dir)?;
    for entry in std::fs::read_dir(out_dir)? {
        let path = entry?.path();
        let name = path.file_name().unwrap_or_default().to_string_lossy();
        if name.starts_with("shard-") && name.ends_with(".jsonl") {
            std::fs::remove_file(&path)?;
        }
    }
    records.sort_by(|a, b| a.id.cmp(&b.id));
    records.shuffle(&mut keyed_rng(config.seed, "pack"));
    let mut counts: BTreeMap<String, BTreeMap<TaskFamily, usize>> = BTreeMap::new();
    for r in &records {
        *counts.entry(r.dataset_name.clone()).or_default().entry(r.task_family).or_default() += 1;
    }
    let mut shards = Vec::new();
    for (i, chunk) in records.chunks(config.shard_size).enumerate() {
        let mut bytes = Vec::new();
        for r in chunk {
            serde_json::to_writer(&mut bytes, r)?;
            bytes.push(b'\n');
        }
        let file = format!("shard-{i:05}.jsonl");
        write_atomic(&out_dir.join(&file), &bytes)?;
        shards.push(ShardInfo {
            file,
            records: chunk.len(),
            sha256: sha256_hex(&bytes),
        });
    }
    let manifest = PackManifest {
        total: records.len(),
        shard_size: config.shard_size,
        seed: config.seed,
        shards,
        counts,
        config_hash,
    };
    let mut text = serde_json::to_vec_pretty(&manifest)?;
    text.push(b'\n');
    write_atomic(&out_dir.join(MANIFEST_FILE), &text)?;
    Ok(manifest)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(tmp, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn records(n: usize) -> Vec<InstructionRecord> {
        (0..n)
            .map(|i| InstructionRecord {
                id: format!("r{i:03}"),
                dataset_name: if i % 2 == 0 { "a" } else { "b" }.into(),
                task_family: TaskFamily::ALL[i % 3],
                clip_ref: format!("clip{i}.wav"),
                query: format!("q{i}"),
                response: format!("a{i}"),
            })
            .collect()
    }

    #[test]
    fn ten_records_in_shards_of_four() {
        let dir = tempfile::tempdir().unwrap();
        let m = pack_dataset(records(10), dir.path(), &PackConfig { shard_size: 4, seed: 1 }, None).unwrap();
        let sizes: Vec<usize> = m.shards.iter().map(|s| s.records).collect();
        assert_eq!(sizes, vec![4, 4, 2]);
        assert_eq!(m.total, 10);
        let total: usize = m.counts.values().flat_map(|t| t.values()).sum();
        assert_eq!(total, 10);
        let text = std::fs::read_to_string(dir.path().join("shard-00002.jsonl")).unwrap();
        assert_eq!(text.lines().count(), 2);
    }

    #[test]
    fn repacking_is_byte_identical_and_order_free() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let cfg = PackConfig { shard_size: 3, seed: 9 };
        pack_dataset(records(10), a.path(), &cfg, None).unwrap();
        let mut reversed = records(10);
        reversed.reverse();
        pack_dataset(reversed, b.path(), &cfg, None).unwrap();
        for name in ["shard-00000.jsonl", "shard-00003.jsonl", MANIFEST_FILE] {
            assert_eq!(
                std::fs::read(a.path().join(name)).unwrap(),
                std::fs::read(b.path().join(name)).unwrap(),
                "{name}"
            );
        }
    }

    #[test]
    fn different_seeds_shuffle_differently() {
        let a = tempfile::tempdir().unwrap();
        let m1 = pack_dataset(records(50), a.path(), &PackConfig { shard_size: 50, seed: 1 }, None).unwrap();
        let m2 = pack_dataset(records(50), a.path(), &PackConfig { shard_size: 50, seed: 2 }, None).unwrap();
        assert_ne!(m1.shards[0].sha256, m2.shards[0].sha256);
    }
}
