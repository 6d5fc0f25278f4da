//! Distance-controlled paraphrasing of audio captions.
//!
//! The pipeline ingests a caption corpus, finds many-to-one caption reuse,
//! indexes caption pairs by content-word distance, prompts a chat model with
//! examples at a target distance and checks what comes back. A small
//! contrastive-learning simulation shows why caption duplication hurts
//! retrieval.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cluster;
pub mod contrastive;
pub mod corpus;
pub mod distance;
pub mod error;
pub mod llmclient;
pub mod prompt;
pub mod textnorm;
pub mod validate;

pub use error::{Error, Result};
