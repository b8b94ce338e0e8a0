//! LLM-guided alignment training for a small dense retriever.
//!
//! A teacher model scores each query's retrieved documents, hard samples are
//! selected by NDCG against the teacher's ideal ranking, and the teacher
//! constructs fine-grained contrastive examples along three objectives
//! (relevance, comprehensiveness, purity). A hashed-feature linear encoder
//! learns from those examples under a dual curriculum that schedules example
//! origin and difficulty, and an assessment loop feeds well-learned samples
//! back to the teacher as in-context exemplars.

pub mod corpus;
pub mod curriculum;
pub mod encoder;
pub mod error;
pub mod evaluation;
pub mod guidance;
pub mod index;
pub mod pipeline;
pub mod scoring;
pub mod teacher;

pub use error::{Error, Result};
