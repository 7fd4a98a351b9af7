//! Toolkit for turning annotated music corpora into instruction-tuning data
//! and for evaluating music-text models.
//!
//! Modules follow the pipeline order: [`audio`] prepares clips, [`mir`]
//! estimates musical features, [`corpus`] ingests source datasets,
//! [`instruct`] generates and filters query/response pairs, [`pool`]
//! downsamples encoder embeddings, and [`metrics`] / [`study`] cover
//! automatic and human evaluation.

pub mod audio;
pub mod corpus;
pub mod instruct;
pub mod metrics;
pub mod mir;
pub mod pool;
pub mod rng;
pub mod study;
pub mod synth;
