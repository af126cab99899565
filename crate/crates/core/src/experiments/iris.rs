use serde_json::json;
use sha2::{Digest, Sha256};

use super::lime::{lime_baseline_explain, LimeConfig, TrainStats};
use super::report::{ChartPanel, Check, ExperimentReport};
use super::{stream_seed, train_test_split};
use crate::blackbox::{ClassProbability, KnnClassifier};
use crate::engine::{explain, EngineConfig, Explanation};
use crate::error::{Error, Result};
use crate::generators::{KdePcaGenerator, PcaSize};
use crate::local_models::SurrogateFamily;
use crate::types::{Dataset, Instance, SummaryStatistics, Transform};

const IRIS_CSV: &str = include_str!("../../data/iris.csv");
pub const IRIS_SHA256: &str = "9cc1c345c71bcc9b486b74cbf6063fa66f4bb5e0f603a4b3c3471ec2e5e8e355";
pub const IRIS_FEATURES: [&str; 4] = ["sepal_length", "sepal_width", "petal_length", "petal_width"];

#[derive(Clone, Debug)]
pub struct IrisTable {
    pub features: Dataset,
    pub species: Vec<String>,
}

/// Parses an Iris-style CSV: header, four numeric columns, species label.
pub fn parse_iris(text: &str) -> Result<IrisTable> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or(Error::EmptyDataset)?;
    let names: Vec<String> = header.split(',').map(|s| s.trim().to_owned()).collect();
    if names.len() != 5 {
        return Err(Error::Parse(format!("expected 5 columns, header has {}", names.len())));
    }
    let mut rows = Vec::new();
    let mut species = Vec::new();
    for (i, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != 5 {
            return Err(Error::Parse(format!("row {}: expected 5 cells, got {}", i + 1, cells.len())));
        }
        let row = cells[..4]
            .iter()
            .map(|c| c.parse::<f64>().map_err(|e| Error::Parse(format!("row {}: {e}", i + 1))))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
        species.push(cells[4].to_owned());
    }
    Ok(IrisTable {
        features: Dataset::from_rows_named(rows, names[..4].to_vec())?,
        species,
    })
}

/// The bundled table, after verifying its checksum and shape.
pub fn load_iris() -> Result<IrisTable> {
    let digest = Sha256::digest(IRIS_CSV.as_bytes());
    let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    if hex != IRIS_SHA256 {
        return Err(Error::Parse(format!("bundled iris.csv checksum mismatch: {hex}")));
    }
    let table = parse_iris(IRIS_CSV)?;
    if table.features.n() != 150 || table.features.d() != 4 {
        return Err(Error::Parse(format!(
            "iris shape {}x{}, expected 150x4",
            table.features.n(),
            table.features.d()
        )));
    }
    Ok(table)
}

#[derive(Clone, Debug)]
pub struct IrisConfig {
    pub test_fraction: f64,
    pub k: usize,
    pub x_star: [f64; 4],
    pub target_class: String,
    pub pca: PcaSize,
    pub bandwidth: Option<f64>,
    pub engine: EngineConfig,
    pub tree_max_depth: usize,
    pub tree_min_samples_leaf: usize,
    pub lime_samples: usize,
    pub lime_kernel_width: Option<f64>,
    pub seed: u64,
}

impl IrisConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            test_fraction: 0.2,
            k: 30,
            x_star: [6.0, 3.0, 5.0, 1.5],
            target_class: "versicolor".into(),
            pca: PcaSize::Components(3),
            bandwidth: Some(0.3),
            engine: EngineConfig {
                r: 0.75,
                batch_size: 200,
                sigma: 1e-3,
                epsilon_c: 1e-3,
                max_batches: 100,
                seed,
            },
            tree_max_depth: 6,
            tree_min_samples_leaf: 10,
            lime_samples: 5000,
            lime_kernel_width: None,
            seed,
        }
    }
}

/// Indices of the two largest `|α|`, largest first.
pub fn top_two(alpha: &SummaryStatistics) -> [usize; 2] {
    let rank = alpha.ranking();
    [rank[0], rank[1]]
}

fn petal_top_two(alpha: &SummaryStatistics) -> bool {
    let mut t = top_two(alpha);
    t.sort();
    t == [2, 3]
}

pub fn iris_experiment(config: &IrisConfig) -> Result<ExperimentReport> {
    let table = load_iris()?;
    let (train_idx, test_idx) = train_test_split(table.features.n(), config.test_fraction, stream_seed(config.seed, 0))?;
    let train = table.features.select(&train_idx)?;
    let train_labels: Vec<&str> = train_idx.iter().map(|&i| table.species[i].as_str()).collect();
    let knn = KnnClassifier::fit(&train, &train_labels, config.k)?;
    let mut correct = 0;
    for &i in &test_idx {
        let label = knn
            .predict_label(table.features.row(i))
            .map_err(|source| Error::BlackBox { batch: 0, source })?;
        if label == table.species[i] {
            correct += 1;
        }
    }
    let accuracy = correct as f64 / test_idx.len() as f64;
    let f = ClassProbability::new::<Instance>(knn, &config.target_class)
        .map_err(|source| Error::BlackBox { batch: 0, source })?;

    let names: Vec<String> = IRIS_FEATURES.iter().map(|s| s.to_string()).collect();
    let x_star = Instance::with_names(config.x_star.to_vec(), names)?;
    let generator = KdePcaGenerator::fit(&train, config.pca, config.bandwidth)?;
    let run = |family: SurrogateFamily| -> Result<Explanation<Instance>> {
        explain(&f, &x_star, &generator, &Transform::Identity, family, &config.engine)
    };
    let linear = run(SurrogateFamily::linear())?;
    let tree = run(SurrogateFamily::Tree {
        max_depth: config.tree_max_depth,
        min_samples_leaf: config.tree_min_samples_leaf,
    })?;

    let stats = TrainStats::from_dataset(&train);
    let lime_cfg = LimeConfig::new(
        config.lime_kernel_width.unwrap_or_else(|| stats.default_kernel_width()),
        config.lime_samples,
        stream_seed(config.seed, 1),
    );
    let lime = lime_baseline_explain(&f, &x_star, &stats, &lime_cfg)?;

    let describe = |a: &SummaryStatistics| {
        let t = top_two(a);
        format!("{}, {}", a.feature_names[t[0]], a.feature_names[t[1]])
    };
    let checks = vec![
        Check::new("blackbox_accuracy", accuracy >= 0.93, format!("test accuracy = {accuracy:.4} (>= 0.93)")),
        Check::new(
            "linear_top2_petal",
            petal_top_two(&linear.importances),
            format!("linear top-2: {}", describe(&linear.importances)),
        ),
        Check::new(
            "tree_top2_petal",
            petal_top_two(&tree.importances),
            format!("tree top-2: {}", describe(&tree.importances)),
        ),
        Check::new(
            "linear_fidelity_gap",
            linear.fidelity_gap <= 0.05 && linear.fidelity_gap < lime.fidelity_gap,
            format!(
                "linear gap {:.4} (<= 0.05 and < baseline {:.4})",
                linear.fidelity_gap, lime.fidelity_gap
            ),
        ),
        Check::new(
            "tree_fidelity_gap",
            tree.fidelity_gap <= 0.05 && tree.fidelity_gap < lime.fidelity_gap,
            format!(
                "tree gap {:.4} (<= 0.05 and < baseline {:.4})",
                tree.fidelity_gap, lime.fidelity_gap
            ),
        ),
    ];

    let pca = generator.pca();
    Ok(ExperimentReport {
        experiment: "iris".into(),
        seed: config.seed,
        blackbox_metrics: json!({
            "model": "knn_classifier",
            "k": config.k,
            "n_train": train_idx.len(),
            "n_test": test_idx.len(),
            "accuracy": accuracy,
            "target_class": config.target_class,
        }),
        melime: json!({
            "pca_components": pca.latent_dim(),
            "explained_variance_ratio": pca.explained_variance_ratio(),
            "kde_bandwidth": generator.latent_kde().bandwidth(),
            "linear": linear.to_json(),
            "tree": tree.to_json(),
        }),
        lime_baseline: lime.to_json(),
        checks,
        panels: vec![
            ChartPanel {
                title: "melime (kdepca + linear)".into(),
                importances: linear.importances.clone(),
            },
            ChartPanel {
                title: "melime (kdepca + tree)".into(),
                importances: tree.importances.clone(),
            },
            ChartPanel {
                title: "baseline".into(),
                importances: lime.importances.clone(),
            },
        ],
    })
}
