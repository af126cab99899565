use serde_json::{json, Value};

use super::LocalData;
use crate::error::{Error, Result};

/// Statistics of black-box outputs over samples perturbed in one feature.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureStats {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    /// Population standard deviation.
    pub std: f64,
}

/// Per-feature summaries of one-at-a-time perturbations.
///
/// `alpha[j] = mean_j − f(x*)`: negative values mark features whose change
/// pushes the prediction down. Features never perturbed get `alpha = 0` and
/// no record.
#[derive(Clone, Debug, PartialEq)]
pub struct StatsSurrogate {
    pub records: Vec<Option<FeatureStats>>,
    pub baseline: f64,
    pub alpha: Vec<f64>,
    x_star: Vec<f64>,
}

impl StatsSurrogate {
    /// Additive approximation `f(x*) + Σ α_j·1[x_j ≠ x*_j]`.
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.baseline
            + x.iter()
                .zip(&self.x_star)
                .zip(&self.alpha)
                .filter(|((a, b), _)| a != b)
                .map(|(_, alpha)| alpha)
                .sum::<f64>()
    }

    pub fn to_json(&self, names: &[String]) -> Value {
        let features: serde_json::Map<_, _> = names
            .iter()
            .zip(&self.records)
            .filter_map(|(name, rec)| {
                rec.as_ref().map(|r| {
                    (
                        name.clone(),
                        json!({"count": r.count, "mean": r.mean, "median": r.median, "std": r.std}),
                    )
                })
            })
            .collect();
        json!({"kind": "stats", "baseline": self.baseline, "features": features})
    }
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Groups outputs by the perturbed feature and summarises each group.
pub fn stats_fit(data: &LocalData, perturbed: &[usize]) -> Result<StatsSurrogate> {
    data.validate()?;
    if perturbed.len() != data.len() {
        return Err(Error::DimensionMismatch {
            expected: data.len(),
            actual: perturbed.len(),
        });
    }
    let d = data.dim();
    let mut groups: Vec<Vec<f64>> = vec![Vec::new(); d];
    for (&j, &y) in perturbed.iter().zip(&data.ys) {
        if j >= d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: j + 1,
            });
        }
        groups[j].push(y);
    }
    let mut records = Vec::with_capacity(d);
    let mut alpha = Vec::with_capacity(d);
    for mut ys in groups {
        if ys.is_empty() {
            records.push(None);
            alpha.push(0.0);
            continue;
        }
        ys.sort_by(f64::total_cmp);
        let n = ys.len() as f64;
        let mean = ys.iter().sum::<f64>() / n;
        let std = (ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n).sqrt();
        alpha.push(mean - data.y_star);
        records.push(Some(FeatureStats {
            count: ys.len(),
            mean,
            median: median(&ys),
            std,
        }));
    }
    Ok(StatsSurrogate {
        records,
        baseline: data.y_star,
        alpha,
        x_star: data.x_star.clone(),
    })
}
