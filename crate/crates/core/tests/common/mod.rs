#![allow(dead_code)]

use std::sync::Arc;

use melime::blackbox::FnBlackBox;
use melime::experiments::arc_length;
use melime::generators::{
    EmbeddingTable, IdentityCodec, KdeModel, KdePcaGenerator, NeighborhoodGenerator, PcaModel, PcaSize, VaeGenerator,
};
use melime::local_models::SurrogateFamily;
use melime::{explain, Dataset, EngineConfig, Instance, TokenInstance, Transform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

pub type Outcome = Result<String, String>;

/// Asymptotic Kolmogorov tail `P(K > λ)` with the usual finite-n correction.
pub fn ks_p_value(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=200 {
        let k = k as f64;
        let term = (-2.0 * k * k * lambda * lambda).exp();
        sum += if k as i64 % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample KS statistic against Uniform(lo, hi).
pub fn ks_uniform(mut xs: Vec<f64>, lo: f64, hi: f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = ((x - lo) / (hi - lo)).clamp(0.0, 1.0);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

pub fn random_dataset(n: usize, d: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (0..n).map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    Dataset::from_rows(rows).unwrap()
}

/// Noisy circle in the plane: a curved one-dimensional manifold.
pub fn circle_dataset(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (0..n)
        .map(|_| {
            let t: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            vec![3.0 * t.cos(), 3.0 * t.sin()]
        })
        .collect();
    Dataset::from_rows(rows).unwrap()
}

fn nearest_distance(train: &Dataset, x: &[f64]) -> f64 {
    train
        .rows()
        .map(|row| row.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        .fold(f64::INFINITY, f64::min)
        .sqrt()
}

/// KDE draws land within `r + 4h` of some training point on ≥ 99.9% of 10k draws.
pub fn kde_manifold_containment() -> Outcome {
    let train = Arc::new(circle_dataset(500, 1));
    let (r, h) = (0.8, 0.15);
    let kde = KdeModel::fit(train.clone(), Some(h)).unwrap();
    let x = Instance::new(vec![3.0, 0.1]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let draws = kde.sample_batch(&x, r, 10_000, &mut rng).unwrap();
    let inside = draws
        .iter()
        .filter(|g| nearest_distance(&train, g.instance.values()) <= r + 4.0 * h)
        .count();
    let frac = inside as f64 / draws.len() as f64;
    if frac >= 0.999 {
        Ok(format!("{inside}/10000 within r + 4h"))
    } else {
        Err(format!("only {inside}/10000 within r + 4h"))
    }
}

/// Brute-force orthogonal projection onto the span of `basis` rows via
/// Gram-Schmidt, independent of the eigen solver.
fn project(x: &[f64], mean: &[f64], basis: &[Vec<f64>]) -> Vec<f64> {
    let mut ortho: Vec<Vec<f64>> = Vec::new();
    for b in basis {
        let mut v = b.clone();
        for q in &ortho {
            let dot: f64 = v.iter().zip(q).map(|(a, c)| a * c).sum();
            v.iter_mut().zip(q).for_each(|(a, c)| *a -= dot * c);
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        v.iter_mut().for_each(|a| *a /= norm);
        ortho.push(v);
    }
    let c: Vec<f64> = x.iter().zip(mean).map(|(a, m)| a - m).collect();
    let mut out = mean.to_vec();
    for q in &ortho {
        let dot: f64 = c.iter().zip(q).map(|(a, b)| a * b).sum();
        out.iter_mut().zip(q).for_each(|(o, b)| *o += dot * b);
    }
    out
}

/// `inverse(encode(x))` equals the brute-force projection within 1e-8, d ≤ 5.
pub fn pca_round_trip() -> Outcome {
    let mut worst = 0.0f64;
    for d in 2..=5 {
        for m in 1..=d {
            let data = random_dataset(80, d, (d * 10 + m) as u64);
            let pca = PcaModel::fit(&data, PcaSize::Components(m)).unwrap();
            for row in data.rows().take(40) {
                let rt = pca.inverse(&pca.encode(row).unwrap()).unwrap();
                let want = project(row, pca.mean(), pca.components());
                for (a, b) in rt.values().iter().zip(&want) {
                    worst = worst.max((a - b).abs());
                }
            }
        }
    }
    if worst <= 1e-8 {
        Ok(format!("max deviation {worst:.2e}"))
    } else {
        Err(format!("max deviation {worst:.2e} > 1e-8"))
    }
}

/// Identity-codec VAE draws are uniform on `[x*_j − r, x*_j + r]` per marginal.
pub fn vae_identity_uniformity() -> Outcome {
    let (r, d) = (0.7, 3);
    let x = Instance::new(vec![1.0, -2.0, 0.5]).unwrap();
    let vae = VaeGenerator::new(IdentityCodec { dim: d });
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let draws = vae.sample_batch(&x, r, 10_000, &mut rng).unwrap();
    let mut ps = Vec::new();
    for j in 0..d {
        let col: Vec<f64> = draws.iter().map(|g| g.instance.values()[j]).collect();
        let c = x.values()[j];
        let p = ks_p_value(ks_uniform(col, c - r, c + r), draws.len());
        ps.push(p);
    }
    let text = ps.iter().map(|p| format!("{p:.3}")).collect::<Vec<_>>().join(", ");
    if ps.iter().all(|&p| p > 0.01) {
        Ok(format!("KS p-values [{text}]"))
    } else {
        Err(format!("KS p-values [{text}], need all > 0.01"))
    }
}

pub fn toy_table() -> EmbeddingTable {
    let words = ["good", "great", "fine", "bad", "awful", "film", "movie", "the", "a"];
    let vecs = vec![
        vec![1.0, 0.0],
        vec![1.1, 0.1],
        vec![0.9, -0.1],
        vec![-1.0, 0.0],
        vec![-1.1, 0.1],
        vec![0.0, 3.0],
        vec![0.1, 3.1],
        vec![5.0, 5.0],
        vec![5.1, 5.0],
    ];
    EmbeddingTable::new(words.iter().map(|s| s.to_string()).collect(), vecs).unwrap()
}

/// Each Word2Vec draw changes at most the annotated position, with a token
/// from that position's neighbourhood; positions are chosen uniformly (χ²).
pub fn word2vec_single_token() -> Outcome {
    let table = toy_table();
    let x = TokenInstance::from_sentence("the good movie").unwrap();
    let r = 0.5;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let draws = table.sample_batch(&x, r, 10_000, &mut rng).unwrap();
    let mut counts = vec![0usize; x.len()];
    for g in &draws {
        let j = g.perturbed_feature.ok_or("missing annotation")?;
        counts[j] += 1;
        let changed: Vec<usize> = (0..x.len()).filter(|&i| g.instance.tokens()[i] != x.tokens()[i]).collect();
        if changed.len() > 1 || changed.iter().any(|&i| i != j) {
            return Err(format!("draw {:?} changes {changed:?}, annotated {j}", g.instance.tokens()));
        }
        let allowed = table.neighbors(&x.tokens()[j], r).unwrap();
        let tok = &g.instance.tokens()[j];
        if !allowed.iter().any(|&k| &table.vocabulary()[k] == tok) {
            return Err(format!("token {tok} not a neighbour of {}", x.tokens()[j]));
        }
    }
    let expected = draws.len() as f64 / x.len() as f64;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let p = 1.0 - ChiSquared::new((x.len() - 1) as f64).unwrap().cdf(chi2);
    if p > 0.01 {
        Ok(format!("10000 single-token draws, position chi2 p = {p:.3}"))
    } else {
        Err(format!("position counts {counts:?}, chi2 p = {p:.4}"))
    }
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// Closed-form arc length against composite Simpson quadrature on 100 angles.
pub fn arc_length_quadrature() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let theta: f64 = rng.random_range(0.01..4.0 * std::f64::consts::PI);
        let q = simpson(|t| (1.0 + t * t).sqrt(), 0.0, theta, 4000);
        worst = worst.max(((arc_length(theta) - q) / q).abs());
    }
    if worst <= 1e-8 {
        Ok(format!("max relative error {worst:.2e}"))
    } else {
        Err(format!("max relative error {worst:.2e} > 1e-8"))
    }
}

/// Draws a random linear f in `d` dims and explains it with `generator`.
pub fn linear_oracle_case<G>(generator: &G, train: &Dataset, d: usize, seed: u64) -> Outcome
where
    G: NeighborhoodGenerator<Instance>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let beta: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
    let b0: f64 = rng.random_range(-1.0..1.0);
    let coef = beta.clone();
    let f = FnBlackBox::new(move |x: &[f64]| b0 + x.iter().zip(&coef).map(|(a, b)| a * b).sum::<f64>());
    let x_star = train.instance(0);
    let cfg = EngineConfig {
        r: 1.5,
        seed,
        ..Default::default()
    };
    let ex = explain(&f, &x_star, generator, &Transform::Identity, SurrogateFamily::linear(), &cfg)
        .map_err(|e| e.to_string())?;
    let err = ex
        .importances
        .alpha
        .iter()
        .zip(&beta)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if err > 0.05 {
        return Err(format!("{} d={d}: max coefficient error {err:.4}", generator.id()));
    }
    Ok(format!("{} d={d}: max coefficient error {err:.1e}", generator.id()))
}

/// Runs the linear oracle for d = 1..=10 under kde, kdepca (m = d) and vae
/// (identity codec, m = d).
pub fn linear_oracle_all() -> Outcome {
    let mut lines = Vec::new();
    for d in 1..=10usize {
        let train = random_dataset(300, d, 100 + d as u64);
        let kde = KdeModel::fit(Arc::new(train.clone()), None).unwrap();
        lines.push(linear_oracle_case(&kde, &train, d, d as u64)?);
        let kdepca = KdePcaGenerator::fit(&train, PcaSize::Components(d), None).unwrap();
        lines.push(linear_oracle_case(&kdepca, &train, d, 20 + d as u64)?);
        let vae = VaeGenerator::new(IdentityCodec { dim: d });
        lines.push(linear_oracle_case(&vae, &train, d, 40 + d as u64)?);
    }
    Ok(format!("{} cases within 0.05", lines.len()))
}

/// `favorable[0]` equals the brute-force maximum over every generated sample.
pub fn favorable_matches_brute_force() -> Outcome {
    use std::sync::Mutex;
    struct Recording<F> {
        inner: F,
        seen: Mutex<Vec<f64>>,
    }
    impl<F: melime::blackbox::BlackBox<Instance>> melime::blackbox::BlackBox<Instance> for Recording<F> {
        fn predict_batch(&self, xs: &[Instance]) -> Result<Vec<f64>, melime::BlackBoxError> {
            let ys = self.inner.predict_batch(xs)?;
            if xs.len() > 1 {
                self.seen.lock().unwrap().extend_from_slice(&ys);
            }
            Ok(ys)
        }
    }
    let train = random_dataset(400, 3, 9);
    let kde = KdeModel::fit(Arc::new(train.clone()), Some(0.3)).unwrap();
    let f = Recording {
        inner: FnBlackBox::new(|x: &[f64]| (2.0 * x[0]).sin() + x[1] * x[2]),
        seen: Mutex::new(Vec::new()),
    };
    let cfg = EngineConfig {
        r: 1.0,
        batch_size: 1000,
        sigma: 1e-9,
        epsilon_c: 1e-9,
        max_batches: 10,
        seed: 4,
    };
    let ex = explain(&f, &train.instance(3), &kde, &Transform::Identity, SurrogateFamily::linear(), &cfg)
        .map_err(|e| e.to_string())?;
    let seen = f.seen.lock().unwrap();
    let max = seen.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = seen.iter().copied().fold(f64::INFINITY, f64::min);
    let fav = ex.counterfactuals.favorable[0].prediction;
    let unfav = ex.counterfactuals.unfavorable[0].prediction;
    if fav == max && unfav == min {
        Ok(format!("{} samples, favorable[0] = max = {max:.6}", seen.len()))
    } else {
        Err(format!("favorable[0] {fav} vs max {max}; unfavorable[0] {unfav} vs min {min}"))
    }
}
