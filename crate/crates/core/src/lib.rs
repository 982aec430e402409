//! Learned context reduction for table question answering.
//!
//! The pipeline annotates which rows and columns of a table a question needs
//! (by re-executing its SQL while removing items), trains a compact pointer
//! policy to predict those items with supervised learning followed by PPO
//! with an adaptive KL penalty and top-p action masking, and measures both
//! reduction recall and downstream QA accuracy against an LLM endpoint or a
//! deterministic mock reader.

pub mod annotate;
pub mod data;
pub mod cli;
pub mod llm;
pub mod metrics;
pub mod policy;
pub mod reward;
pub mod seed;
pub mod sql;
pub mod table;
pub mod trainer;
