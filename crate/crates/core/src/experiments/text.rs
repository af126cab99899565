use serde_json::{json, Value};

use super::report::{ChartPanel, Check, ExperimentReport};
use crate::blackbox::{BlackBox, ClassProbability, NaiveBayesText};
use crate::engine::{explain, EngineConfig};
use crate::error::{Error, Result};
use crate::generators::EmbeddingTable;
use crate::local_models::SurrogateFamily;
use crate::types::{TokenInstance, Transform};

const CORPUS_TSV: &str = include_str!("../../data/toy_corpus.tsv");
const EMBEDDINGS_TXT: &str = include_str!("../../data/toy_embeddings.txt");

const TEMPLATES: [&str; 5] = [
    "the movie is surprisingly {}",
    "a {} story about ordinary people",
    "this film feels {} and long",
    "the acting was {} throughout",
    "an {} picture from the director",
];

/// Sentiment tokens per class with their planted frequencies.
pub const POSITIVE_TOKENS: [(&str, usize); 3] = [("wonderful", 8), ("touching", 7), ("refreshing", 5)];
pub const NEGATIVE_TOKENS: [(&str, usize); 3] = [("dull", 8), ("unfunny", 7), ("pretentious", 5)];

fn class_sentences(tokens: &[(&str, usize)]) -> Vec<String> {
    let mut pool: Vec<&str> = Vec::new();
    // Interleave so each template sees a mix of tokens.
    let mut left: Vec<(&str, usize)> = tokens.to_vec();
    while left.iter().any(|(_, n)| *n > 0) {
        for (tok, n) in left.iter_mut() {
            if *n > 0 {
                pool.push(tok);
                *n -= 1;
            }
        }
    }
    pool.iter()
        .enumerate()
        .map(|(i, tok)| TEMPLATES[i % TEMPLATES.len()].replace("{}", tok))
        .collect()
}

/// The synthetic 40-sentence corpus as `(label, sentence)`, positives first.
///
/// Every sentence carries exactly one sentiment token. Each template is used
/// equally often by both classes, so the filler words carry no class signal
/// and the sentiment token alone decides the label.
pub fn toy_corpus() -> Vec<(String, String)> {
    let pos = class_sentences(&POSITIVE_TOKENS).into_iter().map(|s| ("pos".to_owned(), s));
    let neg = class_sentences(&NEGATIVE_TOKENS).into_iter().map(|s| ("neg".to_owned(), s));
    pos.chain(neg).collect()
}

/// Tab-separated rendering of [`toy_corpus`], as shipped in the data directory.
pub fn toy_corpus_tsv() -> String {
    toy_corpus().iter().map(|(l, s)| format!("{l}\t{s}\n")).collect()
}

/// Parses `label<TAB>sentence` lines.
pub fn parse_corpus(text: &str) -> Result<(Vec<TokenInstance>, Vec<String>)> {
    let mut docs = Vec::new();
    let mut labels = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let (label, sentence) = line
            .split_once('\t')
            .ok_or_else(|| Error::Parse(format!("corpus line {}: missing tab", i + 1)))?;
        docs.push(TokenInstance::from_sentence(sentence)?);
        labels.push(label.to_owned());
    }
    Ok((docs, labels))
}

pub fn toy_embeddings() -> Result<EmbeddingTable> {
    EmbeddingTable::read_text(EMBEDDINGS_TXT.as_bytes())
}

#[derive(Clone, Debug)]
pub struct TextConfig {
    pub sentence: String,
    pub target_class: String,
    /// Position of the planted decisive token in `sentence`.
    pub decisive_position: usize,
    pub engine: EngineConfig,
    pub seed: u64,
}

impl TextConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            sentence: "the movie is surprisingly refreshing".into(),
            target_class: "pos".into(),
            decisive_position: 4,
            engine: EngineConfig {
                r: 1.0,
                batch_size: 200,
                sigma: 1e-3,
                epsilon_c: 1e-3,
                max_batches: 100,
                seed,
            },
            seed,
        }
    }
}

pub fn text_experiment(config: &TextConfig) -> Result<ExperimentReport> {
    let (docs, labels) = parse_corpus(CORPUS_TSV)?;
    let label_refs: Vec<&str> = labels.iter().map(String::as_str).collect();
    let nb = NaiveBayesText::fit(&docs, &label_refs)?;
    let mut correct = 0;
    for (d, l) in docs.iter().zip(&labels) {
        if nb.predict_label(d) == l {
            correct += 1;
        }
    }
    let train_accuracy = correct as f64 / docs.len() as f64;
    let f = ClassProbability::new::<TokenInstance>(nb, &config.target_class)
        .map_err(|source| Error::BlackBox { batch: 0, source })?;
    let table = toy_embeddings()?;
    let x_star = TokenInstance::from_sentence(&config.sentence)?;
    if config.decisive_position >= x_star.len() {
        return Err(Error::InvalidParameter(format!(
            "decisive position {} outside sentence of {} tokens",
            config.decisive_position,
            x_star.len()
        )));
    }
    let transform = Transform::TokenPositionIndicator {
        original: x_star.clone(),
    };
    let ex = explain(&f, &x_star, &table, &transform, SurrogateFamily::Stats, &config.engine)?;

    let alpha = &ex.importances;
    let top = alpha.ranking()[0];
    let a_dec = alpha.alpha[config.decisive_position];
    let best = ex.counterfactuals.favorable.first().map(|c| c.prediction);
    let all_changed = ex
        .counterfactuals
        .favorable
        .iter()
        .chain(&ex.counterfactuals.unfavorable)
        .all(|c| c.instance != x_star);
    let checks = vec![
        Check::new(
            "decisive_token_top",
            top == config.decisive_position && a_dec < 0.0,
            format!(
                "largest |alpha| at {} ({:.4}); decisive {} has alpha {:.4}",
                alpha.feature_names[top], alpha.alpha[top], alpha.feature_names[config.decisive_position], a_dec
            ),
        ),
        Check::new(
            "favorable_exceeds_original",
            best.is_some_and(|b| b > ex.prediction),
            format!("top favorable {:?} vs original {:.4}", best, ex.prediction),
        ),
        Check::new(
            "counterfactuals_differ",
            all_changed,
            "every counterfactual differs from the original in at least one position".into(),
        ),
    ];

    let table_json = |side: &[crate::types::Counterfactual<TokenInstance>]| -> Value {
        side.iter()
            .map(|c| json!({"sentence": c.instance.sentence(), "probability": c.prediction}))
            .collect()
    };
    Ok(ExperimentReport {
        experiment: "text".into(),
        seed: config.seed,
        blackbox_metrics: json!({
            "model": "naive_bayes_text",
            "n_documents": docs.len(),
            "train_accuracy": train_accuracy,
            "target_class": config.target_class,
            "probability": f.predict_batch(std::slice::from_ref(&x_star)).map_err(|source| Error::BlackBox { batch: 0, source })?[0],
        }),
        melime: json!({
            "sentence": config.sentence,
            "explanation": ex.to_json(),
            "favorable_sentences": table_json(&ex.counterfactuals.favorable),
            "unfavorable_sentences": table_json(&ex.counterfactuals.unfavorable),
        }),
        lime_baseline: Value::Null,
        checks,
        panels: vec![ChartPanel {
            title: "melime (word2vec + stats)".into(),
            importances: ex.importances.clone(),
        }],
    })
}
