//! Domain values shared by every stage of an explanation: instances, datasets,
//! the interpretable-space transform and the summary statistics extracted from
//! a fitted surrogate.

use std::sync::Arc;

use serde_json::{json, Value};

use crate::error::{Error, Result};

/// Scalar black-box output: a regression value or the probability of one class.
pub type Prediction = f64;

fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::NonFinite(i)),
        None => Ok(()),
    }
}

/// Default names `f0..f{d-1}`.
pub fn default_feature_names(d: usize) -> Vec<String> {
    (0..d).map(|i| format!("f{i}")).collect()
}

/// A dense, finite feature vector with optional feature names.
#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    values: Vec<f64>,
    feature_names: Option<Arc<[String]>>,
}

impl Instance {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_finite(&values)?;
        Ok(Self {
            values,
            feature_names: None,
        })
    }

    pub fn with_names(values: Vec<f64>, names: Vec<String>) -> Result<Self> {
        check_finite(&values)?;
        if names.len() != values.len() {
            return Err(Error::DimensionMismatch {
                expected: values.len(),
                actual: names.len(),
            });
        }
        Ok(Self {
            values,
            feature_names: Some(names.into()),
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn has_names(&self) -> bool {
        self.feature_names.is_some()
    }

    /// Feature names, falling back to `f0..f{d-1}`.
    pub fn feature_names(&self) -> Vec<String> {
        match &self.feature_names {
            Some(names) => names.to_vec(),
            None => default_feature_names(self.values.len()),
        }
    }
}

/// An ordered, non-empty sequence of non-empty tokens.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TokenInstance {
    tokens: Vec<String>,
}

impl TokenInstance {
    pub fn new(tokens: Vec<String>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::InvalidParameter("token sequence is empty".into()));
        }
        if let Some(i) = tokens.iter().position(|t| t.is_empty()) {
            return Err(Error::InvalidParameter(format!("token {i} is empty")));
        }
        Ok(Self { tokens })
    }

    /// Splits on ASCII/Unicode whitespace.
    pub fn from_sentence(sentence: &str) -> Result<Self> {
        Self::new(sentence.split_whitespace().map(str::to_owned).collect())
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Copy with position `j` replaced.
    pub fn replaced(&self, j: usize, token: &str) -> Self {
        let mut tokens = self.tokens.clone();
        tokens[j] = token.to_owned();
        Self { tokens }
    }

    pub fn sentence(&self) -> String {
        self.tokens.join(" ")
    }
}

/// Rows sharing one feature dimension, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    data: Vec<f64>,
    n: usize,
    d: usize,
    feature_names: Vec<String>,
}

impl Dataset {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let d = rows.first().map(Vec::len).ok_or(Error::EmptyDataset)?;
        Self::from_rows_named(rows, default_feature_names(d))
    }

    pub fn from_rows_named(rows: Vec<Vec<f64>>, feature_names: Vec<String>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        let d = rows[0].len();
        if d == 0 {
            return Err(Error::InvalidParameter("rows have zero features".into()));
        }
        if feature_names.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: feature_names.len(),
            });
        }
        let mut data = Vec::with_capacity(n * d);
        for row in &rows {
            if row.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    actual: row.len(),
                });
            }
            check_finite(row)?;
            data.extend_from_slice(row);
        }
        Ok(Self {
            data,
            n,
            d,
            feature_names,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.d)
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn instance(&self, i: usize) -> Instance {
        Instance {
            values: self.row(i).to_vec(),
            feature_names: Some(self.feature_names.clone().into()),
        }
    }

    /// Per-feature mean and sample standard deviation (n − 1 denominator;
    /// zero when n = 1).
    pub fn column_stats(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.n as f64;
        let mut mean = vec![0.0; self.d];
        for row in self.rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; self.d];
        for row in self.rows() {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m).powi(2);
            }
        }
        let std = var
            .into_iter()
            .map(|s| if self.n > 1 { (s / (n - 1.0)).sqrt() } else { 0.0 })
            .collect();
        (mean, std)
    }

    /// Subset by row indices, preserving names.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let rows = indices.iter().map(|&i| self.row(i).to_vec()).collect();
        Self::from_rows_named(rows, self.feature_names.clone())
    }
}

/// Borrowed view used to dispatch transforms across input kinds.
#[derive(Clone, Copy, Debug)]
pub enum InputRef<'a> {
    Tabular(&'a Instance),
    Tokens(&'a TokenInstance),
}

/// Anything the engine can explain: dense instances and token sequences.
pub trait ExplainedInput: Clone + PartialEq + Send + Sync {
    fn as_input(&self) -> InputRef<'_>;

    /// Report encoding (numbers for tabular rows, strings for tokens).
    fn to_json(&self) -> Value;
}

impl ExplainedInput for Instance {
    fn as_input(&self) -> InputRef<'_> {
        InputRef::Tabular(self)
    }

    fn to_json(&self) -> Value {
        json!(self.values)
    }
}

impl ExplainedInput for TokenInstance {
    fn as_input(&self) -> InputRef<'_> {
        InputRef::Tokens(self)
    }

    fn to_json(&self) -> Value {
        json!(self.tokens)
    }
}

/// Map from the model's input space to the space the surrogate is fitted in.
#[derive(Clone, Debug, PartialEq)]
pub enum Transform {
    Identity,
    /// Entry `j` is 1 iff token `j` differs from `original`'s token `j`.
    TokenPositionIndicator { original: TokenInstance },
}

impl Transform {
    pub fn kind(&self) -> &'static str {
        match self {
            Transform::Identity => "identity",
            Transform::TokenPositionIndicator { .. } => "token_position_indicator",
        }
    }

    pub fn apply<X: ExplainedInput>(&self, x: &X) -> Result<Instance> {
        match (self, x.as_input()) {
            (Transform::Identity, InputRef::Tabular(inst)) => Ok(inst.clone()),
            (Transform::TokenPositionIndicator { original }, InputRef::Tokens(tokens)) => {
                if tokens.len() != original.len() {
                    return Err(Error::DimensionMismatch {
                        expected: original.len(),
                        actual: tokens.len(),
                    });
                }
                let values = original
                    .tokens()
                    .iter()
                    .zip(tokens.tokens())
                    .map(|(a, b)| if a == b { 0.0 } else { 1.0 })
                    .collect();
                Ok(Instance {
                    values,
                    feature_names: None,
                })
            }
            (Transform::Identity, InputRef::Tokens(_)) => Err(Error::KindMismatch(
                "identity transform requires tabular input".into(),
            )),
            (Transform::TokenPositionIndicator { .. }, InputRef::Tabular(_)) => Err(
                Error::KindMismatch("token_position_indicator requires token input".into()),
            ),
        }
    }

    /// Names of the interpretable features for the explained instance.
    pub fn feature_names<X: ExplainedInput>(&self, x_star: &X) -> Vec<String> {
        match (self, x_star.as_input()) {
            (Transform::TokenPositionIndicator { original }, _) => original
                .tokens()
                .iter()
                .enumerate()
                .map(|(j, t)| format!("{j}:{t}"))
                .collect(),
            (Transform::Identity, InputRef::Tabular(inst)) => inst.feature_names(),
            (Transform::Identity, InputRef::Tokens(t)) => default_feature_names(t.len()),
        }
    }
}

/// One number per interpretable feature, read off a fitted surrogate.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryStatistics {
    pub alpha: Vec<f64>,
    pub feature_names: Vec<String>,
}

impl SummaryStatistics {
    pub fn new(alpha: Vec<f64>, feature_names: Vec<String>) -> Result<Self> {
        check_finite(&alpha)?;
        if alpha.len() != feature_names.len() {
            return Err(Error::DimensionMismatch {
                expected: alpha.len(),
                actual: feature_names.len(),
            });
        }
        Ok(Self {
            alpha,
            feature_names,
        })
    }

    pub fn dim(&self) -> usize {
        self.alpha.len()
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.feature_names
            .iter()
            .position(|n| n == name)
            .map(|i| self.alpha[i])
    }

    /// Feature indices ordered by decreasing |α| (stable on ties).
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.alpha.len()).collect();
        idx.sort_by(|&a, &b| self.alpha[b].abs().total_cmp(&self.alpha[a].abs()));
        idx
    }

    pub fn to_json(&self) -> Value {
        let map = self
            .feature_names
            .iter()
            .cloned()
            .zip(self.alpha.iter().map(|&a| json!(a)))
            .collect::<serde_json::Map<_, _>>();
        Value::Object(map)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Counterfactual<I> {
    pub instance: I,
    pub prediction: Prediction,
}

/// The most and least favourable generated neighbours.
#[derive(Clone, Debug, PartialEq)]
pub struct CounterfactualSet<I> {
    /// Descending by prediction.
    pub favorable: Vec<Counterfactual<I>>,
    /// Ascending by prediction.
    pub unfavorable: Vec<Counterfactual<I>>,
}

impl<I: ExplainedInput> CounterfactualSet<I> {
    pub fn to_json(&self) -> Value {
        let enc = |list: &[Counterfactual<I>]| {
            list.iter()
                .map(|c| json!({"x": c.instance.to_json(), "y": c.prediction}))
                .collect::<Vec<_>>()
        };
        json!({"favorable": enc(&self.favorable), "unfavorable": enc(&self.unfavorable)})
    }
}
