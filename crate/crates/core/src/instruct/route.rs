use std::fmt;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::TaskFamily;
use crate::rng::keyed_rng;

/// Reasoning prompts go to at most this many tracks per dataset.
pub const REASONING_TRACK_CAP: usize = 25_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelTier {
    Standard,
    LongContext,
    Large,
}

impl fmt::Display for ModelTier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelTier::Standard => "standard",
            ModelTier::LongContext => "long_context",
            ModelTier::Large => "large",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationRoute {
    pub task_family: TaskFamily,
    pub model_tier: ModelTier,
    pub max_tracks: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoutingConfig {
    /// Approximate token budget of the standard tier's context window.
    pub standard_token_budget: usize,
    pub chars_per_token: usize,
    pub reasoning_track_cap: usize,
}

impl Default for RoutingConfig {
    fn default() -> Self {
        Self {
            standard_token_budget: 3_000,
            chars_per_token: 4,
            reasoning_track_cap: REASONING_TRACK_CAP,
        }
    }
}

impl RoutingConfig {
    pub fn estimate_tokens(&self, text: &str) -> usize {
        text.chars().count().div_ceil(self.chars_per_token.max(1))
    }
}

/// Reasoning always uses the large tier; otherwise a document over the
/// standard budget moves to the long-context tier.
pub fn route(task: TaskFamily, doc_text: &str, config: &RoutingConfig) -> GenerationRoute {
    let (model_tier, max_tracks) = if task == TaskFamily::Reasoning {
        (ModelTier::Large, Some(config.reasoning_track_cap))
    } else if config.estimate_tokens(doc_text) > config.standard_token_budget {
        (ModelTier::LongContext, None)
    } else {
        (ModelTier::Standard, None)
    };
    GenerationRoute {
        task_family: task,
        model_tier,
        max_tracks,
    }
}

/// Seeded subsample of `ids` down to `cap`, returned in input order.
pub fn cap_tracks<T: Clone>(items: &[T], cap: usize, seed: u64, id: impl Fn(&T) -> &str) -> Vec<T> {
    if items.len() <= cap {
        return items.to_vec();
    }
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by(|a, b| id(&items[*a]).cmp(id(&items[*b])));
    order.shuffle(&mut keyed_rng(seed, "reasoning-cap"));
    let mut keep = order[..cap].to_vec();
    keep.sort_unstable();
    keep.into_iter().map(|i| items[i].clone()).collect()
}

/// Endpoint model name per tier.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelMap {
    pub standard: String,
    pub long_context: String,
    pub large: String,
}

impl Default for ModelMap {
    fn default() -> Self {
        Self {
            standard: "gpt-3.5-turbo".into(),
            long_context: "gpt-3.5-turbo-16k".into(),
            large: "gpt-4".into(),
        }
    }
}

impl ModelMap {
    pub fn model(&self, tier: ModelTier) -> &str {
        match tier {
            ModelTier::Standard => &self.standard,
            ModelTier::LongContext => &self.long_context,
            ModelTier::Large => &self.large,
        }
    }
}
