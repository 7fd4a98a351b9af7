//! Instruction-pair generation: metadata documents, prompting, parsing,
//! keyword filtering and dataset packing.

mod client;
mod doc;
mod filter;
mod generate;
mod grammar;
mod pack;
mod route;
mod template;

pub use client::{
    ChatClient, ChatMessage, ChatRequest, ChatResponse, EndpointError, HttpChatClient, RetryPolicy,
};
pub use doc::{build_metadata_doc, render_doc, AUGMENTED_KEYS};
pub use filter::{filter_pairs, FilterList, FilterOutcome, MatchedField, Rejection};
pub use generate::{generate_batch, generate_pairs, GenerationJob, Generated};
pub use grammar::{parse_pairs, ParseIssue};
pub use pack::{pack_dataset, PackConfig, PackManifest, ShardInfo, MANIFEST_FILE};
pub use route::{cap_tracks, route, GenerationRoute, ModelMap, ModelTier, RoutingConfig, REASONING_TRACK_CAP};
pub use template::{PromptTemplate, TemplateError, TemplateSet, METADATA_PLACEHOLDER};

use serde::{Deserialize, Serialize};

use crate::corpus::TaskFamily;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaPair {
    pub query: String,
    pub response: String,
}

/// One (audio, query, response) training example.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionRecord {
    pub id: String,
    pub dataset_name: String,
    pub task_family: TaskFamily,
    pub clip_ref: String,
    pub query: String,
    pub response: String,
}

/// Text fields the keyword filter inspects.
pub trait QueryResponse {
    fn query(&self) -> &str;
    fn response(&self) -> &str;
}

impl QueryResponse for QaPair {
    fn query(&self) -> &str {
        &self.query
    }
    fn response(&self) -> &str {
        &self.response
    }
}

impl QueryResponse for InstructionRecord {
    fn query(&self) -> &str {
        &self.query
    }
    fn response(&self) -> &str {
        &self.response
    }
}
