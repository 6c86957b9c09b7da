//! Teacher-student pseudo-label distillation chains.
//!
//! A teacher classifier is trained on a small labelled set and used to
//! soft-label a large unlabelled pool. The pool labels are filtered per
//! sample (top-P probabilities) and per class (top-K confidences), a fresh
//! student is pretrained on them, fine-tuned on the labelled set, and then
//! becomes the teacher for the next student. The best link of the chain is
//! picked on validation accuracy.
//!
//! The crate is organised bottom-up:
//!
//! - [`dataset`]: tables, CSV I/O, seeded splits, normalization, synthetic data
//! - [`learner`]: feed-forward softmax classifier trained with Adam
//! - [`distill`]: pseudo-labelling and the P/K filters
//! - [`chain`]: the iterated teacher-student loop
//! - [`experiment`]: labelled-fraction sweeps, aggregation and reports

pub mod chain;
pub mod dataset;
pub mod distill;
mod error;
pub mod experiment;
pub mod learner;
pub mod seed;

pub use error::{Error, Result};
