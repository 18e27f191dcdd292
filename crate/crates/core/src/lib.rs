//! Neuron importance rankings for dense word representations.
//!
//! The crate covers the whole pipeline around a ranking of neurons by their
//! importance for a categorical attribute (tense, number, gender, ...):
//!
//! - [`data`]: representation matrices (NRT1), annotation and lexicon
//!   tables, attribute datasets and a synthetic corpus generator with
//!   planted attribute neurons.
//! - [`probes`]: the linear and Gaussian probe classifiers.
//! - [`rankings`]: probeless, linear and greedy Gaussian rankings.
//! - [`eval`]: top-k probing curves, control tasks, selectivity, Wilcoxon
//!   signed-rank tests and K-means clustering of accuracy patterns.
//! - [`interventions`]: ablation and translation of top-ranked neurons,
//!   decoded through a pluggable [`interventions::Decoder`].
//! - [`overlap`]: top-m overlaps between rankings and their exact
//!   expectation under random rankings.

pub mod data;
pub mod error;
pub mod eval;
pub mod interventions;
pub mod overlap;
pub mod probes;
pub mod rankings;
pub mod report;

pub use error::{Error, Result};
