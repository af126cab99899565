//! Reproducible experiment pipelines and the global-sampling baseline they
//! are compared against.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub mod iris;
pub mod lime;
pub mod report;
pub mod spiral;
pub mod text;

pub use iris::{iris_experiment, load_iris, IrisConfig, IrisTable};
pub use lime::{lime_baseline_explain, LimeConfig, LimeExplanation, TrainStats};
pub use report::{Check, ExperimentReport};
pub use spiral::{arc_length, spiral_experiment, spiral_generate, spiral_point, SpiralConfig, SpiralData, SpiralSample};
pub use text::{text_experiment, toy_corpus, toy_embeddings, TextConfig};

/// Independent sub-seed for stream `k` of a run.
pub fn stream_seed(seed: u64, k: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(k.wrapping_mul(0xD1B5_4A32_D192_ED03)) ^ k
}

/// Shuffled `(train, test)` index split; both sides non-empty.
pub fn train_test_split(n: usize, test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!("test fraction must be in (0, 1), got {test_fraction}")));
    }
    let n_test = ((n as f64) * test_fraction).round() as usize;
    if n_test == 0 || n_test >= n {
        return Err(Error::InvalidParameter(format!("cannot split {n} rows with fraction {test_fraction}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = idx.split_off(n - n_test);
    Ok((idx, test))
}

/// Runs a demo by name with default settings.
pub fn run_demo(name: &str, seed: u64) -> Result<ExperimentReport> {
    match name {
        "spiral" => spiral_experiment(&SpiralConfig::new(seed)),
        "iris" => iris_experiment(&IrisConfig::new(seed)),
        "text" => text_experiment(&TextConfig::new(seed)),
        other => Err(Error::InvalidParameter(format!("unknown demo {other:?}"))),
    }
}

pub const DEMOS: [&str; 3] = ["spiral", "iris", "text"];
