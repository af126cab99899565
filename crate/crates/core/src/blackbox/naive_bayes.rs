use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{BlackBoxError, Classifier};
use crate::error::{Error, Result};
use crate::types::TokenInstance;

/// Multinomial naive Bayes over bag-of-words token counts with add-one
/// smoothing. Tokens unseen in training are ignored at prediction time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NaiveBayesText {
    classes: Vec<String>,
    /// Documents per class.
    class_docs: Vec<usize>,
    /// Token occurrences per class.
    class_tokens: Vec<usize>,
    counts: BTreeMap<String, Vec<usize>>,
}

impl NaiveBayesText {
    pub fn fit(corpus: &[TokenInstance], labels: &[&str]) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if corpus.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: corpus.len(),
                actual: labels.len(),
            });
        }
        let mut classes: Vec<String> = labels.iter().map(|s| s.to_string()).collect();
        classes.sort();
        classes.dedup();
        if classes.len() < 2 {
            return Err(Error::InvalidParameter("need at least two classes".into()));
        }
        let c = classes.len();
        let mut class_docs = vec![0; c];
        let mut class_tokens = vec![0; c];
        let mut counts: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (doc, label) in corpus.iter().zip(labels) {
            let k = classes.iter().position(|x| x == label).expect("label present");
            class_docs[k] += 1;
            for token in doc.tokens() {
                counts.entry(token.clone()).or_insert_with(|| vec![0; c])[k] += 1;
                class_tokens[k] += 1;
            }
        }
        Ok(Self {
            classes,
            class_docs,
            class_tokens,
            counts,
        })
    }

    pub fn vocabulary_size(&self) -> usize {
        self.counts.len()
    }

    pub fn proba_one(&self, doc: &TokenInstance) -> Vec<f64> {
        let n_docs: usize = self.class_docs.iter().sum();
        let vocab = self.counts.len() as f64;
        let mut log_post: Vec<f64> = self
            .class_docs
            .iter()
            .map(|&n| (n as f64 / n_docs as f64).ln())
            .collect();
        for token in doc.tokens() {
            if let Some(c) = self.counts.get(token) {
                for (k, lp) in log_post.iter_mut().enumerate() {
                    *lp += ((c[k] as f64 + 1.0) / (self.class_tokens[k] as f64 + vocab)).ln();
                }
            }
        }
        let max = log_post.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut p: Vec<f64> = log_post.iter().map(|lp| (lp - max).exp()).collect();
        let z: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= z);
        p
    }

    pub fn predict_label(&self, doc: &TokenInstance) -> &str {
        let p = self.proba_one(doc);
        let best = (0..p.len()).fold(0, |b, i| if p[i] > p[b] { i } else { b });
        &self.classes[best]
    }
}

impl Classifier<TokenInstance> for NaiveBayesText {
    fn classes(&self) -> &[String] {
        &self.classes
    }

    fn predict_proba(&self, xs: &[TokenInstance]) -> Result<Vec<Vec<f64>>, BlackBoxError> {
        Ok(xs.iter().map(|x| self.proba_one(x)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn s(text: &str) -> TokenInstance {
        TokenInstance::from_sentence(text).unwrap()
    }

    #[test]
    fn hand_computed_posterior() {
        let nb = NaiveBayesText::fit(&[s("good good"), s("bad bad")], &["pos", "neg"]).unwrap();
        // classes sorted: [neg, pos]; V = 2, 2 tokens per class.
        // P(good|pos) = 3/4, P(good|neg) = 1/4, equal priors -> P(pos|good) = 3/4.
        let p = nb.proba_one(&s("good"));
        assert!((p[1] - 0.75).abs() < 1e-12);
        assert_eq!(nb.predict_label(&s("good")), "pos");
    }

    #[test]
    fn unseen_tokens_leave_priors() {
        let nb = NaiveBayesText::fit(&[s("a b"), s("c"), s("d")], &["x", "y", "y"]).unwrap();
        let p = nb.proba_one(&s("zzz qqq"));
        assert!((p[0] - 1.0 / 3.0).abs() < 1e-9);
        assert!((p[1] - 2.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn probabilities_sum_to_one() {
        let nb = NaiveBayesText::fit(
            &[s("fine good day"), s("awful bad day"), s("good fun")],
            &["pos", "neg", "pos"],
        )
        .unwrap();
        let words = ["fine", "good", "awful", "bad", "day", "fun", "new"];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let len = rng.random_range(1..6);
            let doc = TokenInstance::new((0..len).map(|_| words[rng.random_range(0..words.len())].to_string()).collect()).unwrap();
            let p = nb.proba_one(&doc);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn duplicated_corpus_keeps_argmax() {
        let docs = vec![s("fine good day"), s("awful bad day"), s("good fun"), s("bad plot")];
        let labels = ["pos", "neg", "pos", "neg"];
        let nb = NaiveBayesText::fit(&docs, &labels).unwrap();
        let doubled: Vec<TokenInstance> = docs.iter().chain(&docs).cloned().collect();
        let doubled_labels: Vec<&str> = labels.iter().chain(&labels).copied().collect();
        let nb2 = NaiveBayesText::fit(&doubled, &doubled_labels).unwrap();
        for q in ["good day", "bad day", "fun plot", "day"] {
            assert_eq!(nb.predict_label(&s(q)), nb2.predict_label(&s(q)));
        }
    }

    #[test]
    fn rejects_single_class_and_empty() {
        assert!(NaiveBayesText::fit(&[s("a")], &["x"]).is_err());
        assert!(NaiveBayesText::fit(&[], &[]).is_err());
    }
}
