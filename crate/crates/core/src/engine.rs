//! The local mini-batch loop: draw neighbours, query the black box, refit the
//! surrogate on everything gathered so far, and stop once both the summary
//! statistics and the training error have settled.
//!
//! Stopping rule, evaluated from the second batch on:
//!
//! ```text
//! δ = (1/dim α) · ‖α_t − α_{t−1}‖₁ ≤ σ   and   |ε_t − ε_{t−1}| ≤ ε_c
//! ```
//!
//! where `ε` is the surrogate's mean squared training error. The loop ends
//! with `truncated = true` after `max_batches` batches otherwise.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::blackbox::{BlackBox, BlackBoxError};
use crate::error::{Error, Result};
use crate::generators::NeighborhoodGenerator;
use crate::local_models::{LocalData, Surrogate, SurrogateFamily};
use crate::types::{Counterfactual, CounterfactualSet, ExplainedInput, Prediction, SummaryStatistics, Transform};

/// Counterfactuals kept on each side.
pub const COUNTERFACTUALS_PER_SIDE: usize = 5;

#[derive(Clone, Debug, PartialEq)]
pub struct EngineConfig {
    /// Neighbourhood size passed to the generator.
    pub r: f64,
    pub batch_size: usize,
    /// Threshold on δ.
    pub sigma: f64,
    /// Threshold on the change of the training error.
    pub epsilon_c: f64,
    pub max_batches: usize,
    pub seed: u64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            r: 1.0,
            batch_size: 200,
            sigma: 1e-3,
            epsilon_c: 1e-3,
            max_batches: 100,
            seed: 0,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.r.is_nan() || self.r < 0.0 {
            return bad(format!("r must be >= 0, got {}", self.r));
        }
        if self.batch_size < 2 {
            return bad(format!("batch size must be >= 2, got {}", self.batch_size));
        }
        if !(self.sigma > 0.0) {
            return bad(format!("sigma must be > 0, got {}", self.sigma));
        }
        if !(self.epsilon_c > 0.0) {
            return bad(format!("epsilon_c must be > 0, got {}", self.epsilon_c));
        }
        if self.max_batches < 1 {
            return bad("max_batches must be >= 1".into());
        }
        Ok(())
    }
}

/// One completed mini-batch. `delta` is absent for the first batch.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceEntry {
    pub batch: usize,
    pub delta: Option<f64>,
    pub epsilon: f64,
}

/// Mutable convergence bookkeeping for one session.
#[derive(Clone, Debug, Default)]
pub struct ConvergenceState {
    pub alpha_prev: Option<SummaryStatistics>,
    pub epsilon_prev: Option<f64>,
    pub history: Vec<TraceEntry>,
}

impl ConvergenceState {
    /// Records a refit and reports whether both criteria hold.
    pub fn update(&mut self, alpha: SummaryStatistics, epsilon: f64, sigma: f64, epsilon_c: f64) -> Result<bool> {
        let d = match &self.alpha_prev {
            Some(prev) => Some(delta(prev, &alpha)?),
            None => None,
        };
        let converged = match (d, self.epsilon_prev) {
            (Some(d), Some(prev)) => d <= sigma && (epsilon - prev).abs() <= epsilon_c,
            _ => false,
        };
        self.history.push(TraceEntry {
            batch: self.history.len() + 1,
            delta: d,
            epsilon,
        });
        self.alpha_prev = Some(alpha);
        self.epsilon_prev = Some(epsilon);
        Ok(converged)
    }
}

/// Mean absolute componentwise change between two summary statistics.
pub fn delta(prev: &SummaryStatistics, next: &SummaryStatistics) -> Result<f64> {
    if prev.dim() != next.dim() {
        return Err(Error::DimensionMismatch {
            expected: prev.dim(),
            actual: next.dim(),
        });
    }
    if prev.dim() == 0 {
        return Ok(0.0);
    }
    let l1: f64 = prev.alpha.iter().zip(&next.alpha).map(|(a, b)| (a - b).abs()).sum();
    Ok(l1 / prev.dim() as f64)
}

fn top_k<I: Clone + PartialEq>(candidates: &[Counterfactual<I>], descending: bool) -> Vec<Counterfactual<I>> {
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    // Stable: equal predictions keep generation order.
    order.sort_by(|&a, &b| {
        let (pa, pb) = (candidates[a].prediction, candidates[b].prediction);
        if descending {
            pb.total_cmp(&pa)
        } else {
            pa.total_cmp(&pb)
        }
    });
    let mut kept: Vec<Counterfactual<I>> = Vec::with_capacity(COUNTERFACTUALS_PER_SIDE);
    for i in order {
        if kept.len() == COUNTERFACTUALS_PER_SIDE {
            break;
        }
        if kept.iter().all(|c| c.instance != candidates[i].instance) {
            kept.push(candidates[i].clone());
        }
    }
    kept
}

/// Top five and bottom five distinct samples by prediction, in generation
/// order on ties.
pub fn harvest_counterfactuals<I: Clone + PartialEq>(samples: &[(I, Prediction)]) -> Result<CounterfactualSet<I>> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let all: Vec<Counterfactual<I>> = samples
        .iter()
        .map(|(instance, prediction)| Counterfactual {
            instance: instance.clone(),
            prediction: *prediction,
        })
        .collect();
    Ok(CounterfactualSet {
        favorable: top_k(&all, true),
        unfavorable: top_k(&all, false),
    })
}

/// Folds a new batch into running counterfactual lists. The kept lists were
/// generated earlier, so they go first to preserve tie order.
fn merge_counterfactuals<I: Clone + PartialEq>(current: &mut CounterfactualSet<I>, batch: &[Counterfactual<I>]) {
    let mut fav = current.favorable.clone();
    fav.extend_from_slice(batch);
    let mut unfav = current.unfavorable.clone();
    unfav.extend_from_slice(batch);
    current.favorable = top_k(&fav, true);
    current.unfavorable = top_k(&unfav, false);
}

/// Result of one explanation session.
#[derive(Clone, Debug)]
pub struct Explanation<I> {
    pub importances: SummaryStatistics,
    /// Black-box output at the explained instance.
    pub prediction: Prediction,
    /// Surrogate output at the transformed explained instance.
    pub surrogate_prediction: f64,
    pub fidelity_gap: f64,
    pub converged: bool,
    pub truncated: bool,
    pub trace: Vec<TraceEntry>,
    pub counterfactuals: CounterfactualSet<I>,
    pub surrogate: Surrogate,
    pub generator_id: String,
    pub surrogate_id: String,
    pub transform_kind: String,
    pub config: EngineConfig,
    pub n_samples: usize,
}

impl<I: ExplainedInput> Explanation<I> {
    pub fn to_json(&self) -> Value {
        let trace: Vec<Value> = self
            .trace
            .iter()
            .map(|t| json!({"batch": t.batch, "delta": t.delta, "epsilon": t.epsilon}))
            .collect();
        json!({
            "importances": self.importances.to_json(),
            "prediction": self.prediction,
            "surrogate_prediction": self.surrogate_prediction,
            "fidelity_gap": self.fidelity_gap,
            "converged": self.converged,
            "truncated": self.truncated,
            "trace": trace,
            "counterfactuals": self.counterfactuals.to_json(),
            "surrogate": self.surrogate.detail_json(&self.importances.feature_names),
            "config": {
                "generator": self.generator_id,
                "local_model": self.surrogate_id,
                "transform": self.transform_kind,
                "r": self.config.r,
                "batch_size": self.config.batch_size,
                "sigma": self.config.sigma,
                "epsilon_c": self.config.epsilon_c,
                "max_batches": self.config.max_batches,
                "n_samples": self.n_samples,
            },
            "seed": self.config.seed,
        })
    }

    pub fn final_delta(&self) -> Option<f64> {
        self.trace.last().and_then(|t| t.delta)
    }
}

fn check_outputs(ys: &[f64], expected: usize) -> std::result::Result<(), BlackBoxError> {
    if ys.len() != expected {
        return Err(BlackBoxError::Malformed(format!(
            "black box returned {} outputs for {expected} inputs",
            ys.len()
        )));
    }
    if let Some(y) = ys.iter().find(|y| !y.is_finite()) {
        return Err(BlackBoxError::Malformed(format!("non-finite output {y}")));
    }
    Ok(())
}

/// Explains `f(x_star)`.
///
/// The black box is queried once for `x_star` (reported as batch 0) and then
/// exactly once per mini-batch.
pub fn explain<I, F, G>(
    f: &F,
    x_star: &I,
    generator: &G,
    transform: &Transform,
    family: SurrogateFamily,
    config: &EngineConfig,
) -> Result<Explanation<I>>
where
    I: ExplainedInput,
    F: BlackBox<I> + ?Sized,
    G: NeighborhoodGenerator<I> + ?Sized,
{
    config.validate()?;
    let y_star = f
        .predict_batch(std::slice::from_ref(x_star))
        .and_then(|ys| check_outputs(&ys, 1).map(|_| ys[0]))
        .map_err(|source| Error::BlackBox { batch: 0, source })?;
    let x_star_t = transform.apply(x_star)?;
    let names = transform.feature_names(x_star);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut data = LocalData::new(x_star_t.values().to_vec(), y_star);
    let mut state = ConvergenceState::default();
    let mut counterfactuals = CounterfactualSet {
        favorable: Vec::new(),
        unfavorable: Vec::new(),
    };
    let mut converged = false;
    let mut surrogate = None;

    for batch in 1..=config.max_batches {
        let generated = generator.sample_batch(x_star, config.r, config.batch_size, &mut rng)?;
        let instances: Vec<I> = generated.iter().map(|g| g.instance.clone()).collect();
        let ys = f
            .predict_batch(&instances)
            .and_then(|ys| check_outputs(&ys, instances.len()).map(|_| ys))
            .map_err(|source| Error::BlackBox { batch, source })?;

        let mut fresh = Vec::with_capacity(ys.len());
        for (g, &y) in generated.into_iter().zip(&ys) {
            let xt = transform.apply(&g.instance)?;
            data.push(xt.into_values(), y, g.perturbed_feature);
            if g.instance == *x_star {
                continue;
            }
            fresh.push(Counterfactual {
                instance: g.instance,
                prediction: y,
            });
        }
        merge_counterfactuals(&mut counterfactuals, &fresh);

        let g = family.fit(&data)?;
        let alpha = SummaryStatistics::new(g.alpha().to_vec(), names.clone())?;
        let epsilon = g.training_error(&data)?;
        surrogate = Some(g);
        if state.update(alpha, epsilon, config.sigma, config.epsilon_c)? {
            converged = true;
            break;
        }
    }

    let surrogate = surrogate.expect("max_batches >= 1");
    let surrogate_prediction = surrogate.predict(x_star_t.values())?;
    let importances = state.alpha_prev.clone().expect("at least one refit");
    Ok(Explanation {
        importances,
        prediction: y_star,
        surrogate_prediction,
        fidelity_gap: (surrogate_prediction - y_star).abs(),
        converged,
        truncated: !converged,
        trace: state.history,
        counterfactuals,
        surrogate_id: family.id().to_owned(),
        surrogate,
        generator_id: generator.id().to_owned(),
        transform_kind: transform.kind().to_owned(),
        config: config.clone(),
        n_samples: data.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Instance;

    fn stats(v: &[f64]) -> SummaryStatistics {
        SummaryStatistics::new(v.to_vec(), crate::types::default_feature_names(v.len())).unwrap()
    }

    #[test]
    fn delta_examples() {
        assert_eq!(delta(&stats(&[0.3, -1.0]), &stats(&[0.3, -1.0])).unwrap(), 0.0);
        assert_eq!(delta(&stats(&[1.0, 0.0]), &stats(&[0.0, 1.0])).unwrap(), 1.0);
        assert_eq!(delta(&stats(&[2.0]), &stats(&[-1.0])).unwrap(), 3.0);
        assert!(delta(&stats(&[2.0]), &stats(&[1.0, 0.0])).is_err());
    }

    #[test]
    fn first_update_never_converges() {
        let mut s = ConvergenceState::default();
        assert!(!s.update(stats(&[1.0]), 0.0, f64::INFINITY, f64::INFINITY).unwrap());
        assert!(s.update(stats(&[1.0]), 0.0, f64::INFINITY, f64::INFINITY).unwrap());
        assert_eq!(s.history.len(), 2);
        assert_eq!(s.history[0].delta, None);
    }

    fn inst(v: f64) -> Instance {
        Instance::new(vec![v]).unwrap()
    }

    #[test]
    fn harvest_sorts_both_sides() {
        let samples = vec![(inst(0.0), 0.2), (inst(1.0), 0.9), (inst(2.0), 0.5)];
        let set = harvest_counterfactuals(&samples).unwrap();
        let fav: Vec<f64> = set.favorable.iter().map(|c| c.prediction).collect();
        let unfav: Vec<f64> = set.unfavorable.iter().map(|c| c.prediction).collect();
        assert_eq!(fav, vec![0.9, 0.5, 0.2]);
        assert_eq!(unfav, vec![0.2, 0.5, 0.9]);
    }

    #[test]
    fn harvest_ties_keep_generation_order() {
        let samples: Vec<(Instance, f64)> = (0..8).map(|i| (inst(i as f64), 0.5)).collect();
        let set = harvest_counterfactuals(&samples).unwrap();
        let order: Vec<f64> = set.favorable.iter().map(|c| c.instance.values()[0]).collect();
        assert_eq!(order, vec![0.0, 1.0, 2.0, 3.0, 4.0]);
        assert_eq!(set.favorable, set.unfavorable);
        assert!(harvest_counterfactuals::<Instance>(&[]).is_err());
    }

    #[test]
    fn harvest_drops_duplicate_instances() {
        let samples = vec![(inst(1.0), 0.9), (inst(1.0), 0.9), (inst(2.0), 0.4), (inst(1.0), 0.9)];
        let set = harvest_counterfactuals(&samples).unwrap();
        assert_eq!(set.favorable.len(), 2);
        assert_eq!(set.favorable[0].instance, inst(1.0));
        assert_eq!(set.unfavorable[0].instance, inst(2.0));
    }

    #[test]
    fn incremental_merge_matches_one_shot() {
        let preds = [0.3, 0.7, 0.7, 0.1, 0.9, 0.3, 0.5, 0.7, 0.1, 0.9, 0.2, 0.7, 0.3];
        let samples: Vec<(Instance, f64)> = preds.iter().enumerate().map(|(i, &p)| (inst(i as f64), p)).collect();
        let one_shot = harvest_counterfactuals(&samples).unwrap();
        let mut running = CounterfactualSet { favorable: vec![], unfavorable: vec![] };
        for chunk in samples.chunks(4) {
            let batch: Vec<Counterfactual<Instance>> = chunk
                .iter()
                .map(|(x, p)| Counterfactual { instance: x.clone(), prediction: *p })
                .collect();
            merge_counterfactuals(&mut running, &batch);
        }
        assert_eq!(running, one_shot);
    }

    #[test]
    fn config_validation() {
        assert!(EngineConfig::default().validate().is_ok());
        assert!(EngineConfig { batch_size: 1, ..Default::default() }.validate().is_err());
        assert!(EngineConfig { sigma: 0.0, ..Default::default() }.validate().is_err());
        assert!(EngineConfig { epsilon_c: f64::NAN, ..Default::default() }.validate().is_err());
        assert!(EngineConfig { max_batches: 0, ..Default::default() }.validate().is_err());
        assert!(EngineConfig { sigma: f64::INFINITY, ..Default::default() }.validate().is_ok());
    }
}
