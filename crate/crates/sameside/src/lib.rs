//! Same-side stance classification toolkit.
//!
//! Everything needed to run the same-side experiments end to end on a single
//! machine: corpus parsing and splitting ([`corpus`]), lower-cased WordPiece
//! encoding of argument pairs ([`tokenizer`]), a small BERT-style encoder with
//! exact hand-derived gradients ([`model`], [`training`]), a linear SVM
//! baseline ([`baseline`]), and the metric/sweep/plot harness ([`eval`],
//! [`plot`]).
//!
//! All floating point work is `f64` and every entry point is deterministic
//! given its seed: the same inputs produce bit-identical outputs. With the
//! default `parallel` feature the batch-level inner loops run on rayon using
//! a fixed reduction order, so parallel and sequential builds agree bitwise.

pub mod baseline;
pub mod corpus;
pub mod eval;
pub mod math;
pub mod model;
pub mod par;
pub mod plot;
pub mod tokenizer;
pub mod training;

#[cfg(test)]
mod testutil;

pub use corpus::{ArgumentPairRecord, ClassStatistics, Corpus, DataSplit, LengthHistogram};
pub use eval::{ConfusionMatrix, ExperimentSpec, MetricsReport, ModelKind, ResultsTable, SplitMode};
pub use model::{ModelConfig, Parameters};
pub use tokenizer::{EncodedPair, Vocabulary};
pub use training::Hyperparams;
