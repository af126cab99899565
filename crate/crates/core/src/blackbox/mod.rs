//! The black-box contract, the built-in desk-scale models, and the bridge
//! that turns an external process into a black box.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use crate::error::BlackBoxError;

pub mod bridge;
mod knn;
mod naive_bayes;

pub use bridge::{BridgeBlackBox, BridgeHandshake, BridgeModel, BRIDGE_PROTOCOL_VERSION};
pub use knn::{KnnClassifier, KnnRegressor, DISTANCE_FLOOR};
pub use naive_bayes::NaiveBayesText;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Regression,
    Classification,
}

/// A deterministic batched map from inputs to scalar outputs.
pub trait BlackBox<I>: Send + Sync {
    fn predict_batch(&self, xs: &[I]) -> Result<Vec<f64>, BlackBoxError>;
}

/// A model producing one probability per class.
pub trait Classifier<I>: Send + Sync {
    fn classes(&self) -> &[String];
    fn predict_proba(&self, xs: &[I]) -> Result<Vec<Vec<f64>>, BlackBoxError>;
}

impl<I, B: BlackBox<I> + ?Sized> BlackBox<I> for &B {
    fn predict_batch(&self, xs: &[I]) -> Result<Vec<f64>, BlackBoxError> {
        (**self).predict_batch(xs)
    }
}

impl<I, B: BlackBox<I> + ?Sized> BlackBox<I> for Box<B> {
    fn predict_batch(&self, xs: &[I]) -> Result<Vec<f64>, BlackBoxError> {
        (**self).predict_batch(xs)
    }
}

impl<I, B: BlackBox<I> + ?Sized> BlackBox<I> for Arc<B> {
    fn predict_batch(&self, xs: &[I]) -> Result<Vec<f64>, BlackBoxError> {
        (**self).predict_batch(xs)
    }
}

/// Selects the probability of one class from a classifier.
#[derive(Clone, Debug)]
pub struct ClassProbability<C> {
    model: C,
    class_index: usize,
}

impl<C> ClassProbability<C> {
    pub fn new<I>(model: C, class: &str) -> Result<Self, BlackBoxError>
    where
        C: Classifier<I>,
    {
        let class_index = model
            .classes()
            .iter()
            .position(|c| c == class)
            .ok_or_else(|| BlackBoxError::UnknownClass(class.to_owned()))?;
        Ok(Self { model, class_index })
    }

    pub fn model(&self) -> &C {
        &self.model
    }

    pub fn class_index(&self) -> usize {
        self.class_index
    }
}

impl<I, C: Classifier<I>> BlackBox<I> for ClassProbability<C> {
    fn predict_batch(&self, xs: &[I]) -> Result<Vec<f64>, BlackBoxError> {
        Ok(self
            .model
            .predict_proba(xs)?
            .into_iter()
            .map(|p| p[self.class_index])
            .collect())
    }
}

/// Wraps a plain function of the feature vector.
pub struct FnBlackBox<F> {
    f: F,
}

impl<F> FnBlackBox<F>
where
    F: Fn(&[f64]) -> f64 + Send + Sync,
{
    pub fn new(f: F) -> Self {
        Self { f }
    }
}

impl<F> BlackBox<crate::Instance> for FnBlackBox<F>
where
    F: Fn(&[f64]) -> f64 + Send + Sync,
{
    fn predict_batch(&self, xs: &[crate::Instance]) -> Result<Vec<f64>, BlackBoxError> {
        Ok(xs.iter().map(|x| (self.f)(x.values())).collect())
    }
}

/// Counts every row passed to the wrapped model.
pub struct CountingBlackBox<B> {
    inner: B,
    rows: AtomicUsize,
    calls: AtomicUsize,
}

impl<B> CountingBlackBox<B> {
    pub fn new(inner: B) -> Self {
        Self {
            inner,
            rows: AtomicUsize::new(0),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows.load(Ordering::SeqCst)
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl<I, B: BlackBox<I>> BlackBox<I> for CountingBlackBox<B> {
    fn predict_batch(&self, xs: &[I]) -> Result<Vec<f64>, BlackBoxError> {
        self.rows.fetch_add(xs.len(), Ordering::SeqCst);
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.predict_batch(xs)
    }
}

/// Built-in models as stored in JSON model files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelFile {
    KnnRegressor(KnnRegressor),
    KnnClassifier(KnnClassifier),
    NaiveBayesText(NaiveBayesText),
}

impl ModelFile {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> crate::Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}
