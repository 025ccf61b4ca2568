//! Cross-lingual knowledge distillation for answer sentence selection.
//!
//! The crate covers the whole pipeline: ingesting QA corpora into ranked
//! candidate lists ([`data`]), translating them into parallel pairs
//! ([`translation`]), obtaining teacher logits ([`teacher`]), training a small
//! student scorer from gold labels or from the teacher's soft labels
//! ([`trainer`], [`student`], [`distill`]) and evaluating rankings
//! ([`metrics`]). [`synth`] generates bilingual corpora with a known oracle
//! teacher for end-to-end checks.

#![allow(clippy::needless_range_loop)]

pub mod as2;
pub mod data;
pub mod distill;
pub mod error;
pub mod metrics;
pub mod student;
pub mod synth;
pub mod teacher;
pub mod trainer;
pub mod translation;

pub use as2::{pair_id, As2Dataset, As2Example, Candidate, Language, Question, Split};
pub use distill::{KdConfig, Logits, Reduction};
pub use error::{Error, Result};
pub use metrics::{evaluate_dataset, EvalOptions, EvalReport, PairScorer};
