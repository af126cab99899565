//! Model-agnostic local explanations drawn from a meaningful neighbourhood.
//!
//! An explanation of `f(x*)` is built by sampling neighbours of `x*` that
//! stay on the training-data manifold ([`generators`]), querying the black
//! box on them ([`blackbox`]), and fitting an interpretable surrogate
//! ([`local_models`]) in mini-batches until its summary statistics settle
//! ([`engine`]). The most and least favourable neighbours are returned as
//! counterfactual examples.

pub mod blackbox;
pub mod engine;
mod error;
pub mod experiments;
pub mod generators;
pub mod local_models;
mod types;

pub use engine::{delta, explain, harvest_counterfactuals, EngineConfig, Explanation, TraceEntry};
pub use error::{BlackBoxError, Error, Result};
pub use types::{
    default_feature_names, Counterfactual, CounterfactualSet, Dataset, ExplainedInput, InputRef, Instance,
    Prediction, SummaryStatistics, TokenInstance, Transform,
};
