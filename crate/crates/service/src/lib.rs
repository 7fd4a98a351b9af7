//! Study-hosting HTTP service and an offline chat-completion stub.

pub mod api;
pub mod server;
pub mod store;
pub mod stub;

pub use api::router;
pub use server::RunningServer;
pub use store::{study_id, NextItem, StoreError, StudyStore, SubmitJudgment};
pub use stub::{StubConfig, StubRule, StubState};
