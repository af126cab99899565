//! Versioned JSON documents for fitted PCA and KDE models.
//!
//! Floats are written in shortest round-trip decimal form, so a load of a
//! saved model reproduces every bit.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::kde::KdeModel;
use super::pca::PcaModel;
use crate::error::{Error, Result};
use crate::types::Dataset;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct PcaDoc {
    format: String,
    version: u32,
    m: usize,
    mean: Vec<f64>,
    components: Vec<Vec<f64>>,
    eigenvalues: Vec<f64>,
    explained_variance_ratio: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct KdeDoc {
    format: String,
    version: u32,
    bandwidth: f64,
    distance: String,
    feature_names: Vec<String>,
    train: Vec<Vec<f64>>,
}

fn check_header(format: &str, expected: &str, version: u32) -> Result<()> {
    if format != expected {
        return Err(Error::Parse(format!("expected format {expected:?}, found {format:?}")));
    }
    if version != MODEL_FORMAT_VERSION {
        return Err(Error::Parse(format!(
            "unsupported model version {version} (expected {MODEL_FORMAT_VERSION})"
        )));
    }
    Ok(())
}

pub fn pca_to_json(model: &PcaModel) -> String {
    let doc = PcaDoc {
        format: "melime.pca".into(),
        version: MODEL_FORMAT_VERSION,
        m: model.latent_dim(),
        mean: model.mean.clone(),
        components: model.components.clone(),
        eigenvalues: model.eigenvalues.clone(),
        explained_variance_ratio: model.explained_variance_ratio.clone(),
    };
    serde_json::to_string_pretty(&doc).expect("PCA document serializes")
}

pub fn pca_from_json(text: &str) -> Result<PcaModel> {
    let doc: PcaDoc = serde_json::from_str(text)?;
    check_header(&doc.format, "melime.pca", doc.version)?;
    let d = doc.mean.len();
    if doc.components.len() != doc.m
        || doc.eigenvalues.len() != doc.m
        || doc.explained_variance_ratio.len() != doc.m
        || doc.components.iter().any(|c| c.len() != d)
    {
        return Err(Error::Parse("inconsistent PCA dimensions".into()));
    }
    Ok(PcaModel {
        mean: doc.mean,
        components: doc.components,
        eigenvalues: doc.eigenvalues,
        explained_variance_ratio: doc.explained_variance_ratio,
    })
}

pub fn kde_to_json(model: &KdeModel) -> String {
    let doc = KdeDoc {
        format: "melime.kde".into(),
        version: MODEL_FORMAT_VERSION,
        bandwidth: model.bandwidth(),
        distance: "euclidean".into(),
        feature_names: model.train().feature_names().to_vec(),
        train: model.train().rows().map(<[f64]>::to_vec).collect(),
    };
    serde_json::to_string_pretty(&doc).expect("KDE document serializes")
}

pub fn kde_from_json(text: &str) -> Result<KdeModel> {
    let doc: KdeDoc = serde_json::from_str(text)?;
    check_header(&doc.format, "melime.kde", doc.version)?;
    if doc.distance != "euclidean" {
        return Err(Error::Parse(format!("unsupported distance {:?}", doc.distance)));
    }
    let train = Dataset::from_rows_named(doc.train, doc.feature_names)?;
    KdeModel::fit(Arc::new(train), Some(doc.bandwidth))
}
