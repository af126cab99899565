use std::collections::HashMap;
use std::io::{BufRead, Write};

use rand::{Rng, RngCore};

use super::{check_radius, euclidean, Generated, NeighborhoodGenerator};
use crate::error::{Error, Result};
use crate::types::TokenInstance;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum EmbeddingDistance {
    #[default]
    Euclidean,
    /// `1 − cos(a, b)`.
    Cosine,
}

/// Token vectors loaded from a pre-trained embedding.
#[derive(Clone, Debug)]
pub struct EmbeddingTable {
    vocabulary: Vec<String>,
    vectors: Vec<f64>,
    dim: usize,
    index: HashMap<String, usize>,
    distance: EmbeddingDistance,
}

impl EmbeddingTable {
    pub fn new(vocabulary: Vec<String>, vectors: Vec<Vec<f64>>) -> Result<Self> {
        if vocabulary.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if vocabulary.len() != vectors.len() {
            return Err(Error::DimensionMismatch {
                expected: vocabulary.len(),
                actual: vectors.len(),
            });
        }
        let dim = vectors[0].len();
        if dim == 0 {
            return Err(Error::InvalidParameter("embedding dimension is zero".into()));
        }
        let mut flat = Vec::with_capacity(dim * vectors.len());
        let mut index = HashMap::with_capacity(vocabulary.len());
        for (i, (token, v)) in vocabulary.iter().zip(&vectors).enumerate() {
            if token.is_empty() {
                return Err(Error::Parse(format!("empty token at row {i}")));
            }
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Parse(format!("non-finite vector for {token:?}")));
            }
            if index.insert(token.clone(), i).is_some() {
                return Err(Error::Parse(format!("duplicate token {token:?}")));
            }
            flat.extend_from_slice(v);
        }
        Ok(Self {
            vocabulary,
            vectors: flat,
            dim,
            index,
            distance: EmbeddingDistance::Euclidean,
        })
    }

    pub fn with_distance(mut self, distance: EmbeddingDistance) -> Self {
        self.distance = distance;
        self
    }

    /// Reads the text layout: a `n m` header line, then `token v1 .. vm` per line.
    pub fn read_text<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("missing embedding header".into()))??;
        let mut parts = header.split_whitespace();
        let (n, m) = match (parts.next(), parts.next(), parts.next()) {
            (Some(n), Some(m), None) => (
                n.parse::<usize>().map_err(|e| Error::Parse(format!("header count: {e}")))?,
                m.parse::<usize>().map_err(|e| Error::Parse(format!("header dim: {e}")))?,
            ),
            _ => return Err(Error::Parse(format!("bad embedding header {header:?}"))),
        };
        let mut vocabulary = Vec::with_capacity(n);
        let mut vectors = Vec::with_capacity(n);
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split(' ').filter(|f| !f.is_empty());
            let token = fields.next().unwrap_or_default().to_owned();
            let v = fields
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 2)))?;
            if v.len() != m {
                return Err(Error::Parse(format!(
                    "line {}: expected {m} values, got {}",
                    lineno + 2,
                    v.len()
                )));
            }
            vocabulary.push(token);
            vectors.push(v);
        }
        if vocabulary.len() != n {
            return Err(Error::Parse(format!(
                "header declares {n} tokens, found {}",
                vocabulary.len()
            )));
        }
        Self::new(vocabulary, vectors)
    }

    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{} {}", self.vocabulary.len(), self.dim)?;
        for (i, token) in self.vocabulary.iter().enumerate() {
            write!(out, "{token}")?;
            for v in self.vector(i) {
                write!(out, " {v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocabulary.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vocabulary(&self) -> &[String] {
        &self.vocabulary
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    fn vector(&self, i: usize) -> &[f64] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn lookup(&self, token: &str) -> Option<&[f64]> {
        self.index.get(token).map(|&i| self.vector(i))
    }

    fn distance_between(&self, a: usize, b: usize) -> f64 {
        if a == b {
            return 0.0;
        }
        let (va, vb) = (self.vector(a), self.vector(b));
        match self.distance {
            EmbeddingDistance::Euclidean => euclidean(va, vb),
            EmbeddingDistance::Cosine => {
                let dot: f64 = va.iter().zip(vb).map(|(x, y)| x * y).sum();
                let na = va.iter().map(|x| x * x).sum::<f64>().sqrt();
                let nb = vb.iter().map(|x| x * x).sum::<f64>().sqrt();
                if na == 0.0 || nb == 0.0 {
                    1.0
                } else {
                    1.0 - dot / (na * nb)
                }
            }
        }
    }

    /// Vocabulary indices within `r` of `token`, including the token itself.
    pub fn neighbors(&self, token: &str, r: f64) -> Result<Vec<usize>> {
        let &centre = self
            .index
            .get(token)
            .ok_or_else(|| Error::OutOfVocabulary(token.to_owned()))?;
        Ok((0..self.vocabulary.len())
            .filter(|&i| self.distance_between(centre, i) <= r)
            .collect())
    }

    /// Replaces one uniformly chosen position with a uniformly chosen
    /// embedding neighbour; returns the new sentence and the position.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        x_star: &TokenInstance,
        r: f64,
        rng: &mut R,
    ) -> Result<(TokenInstance, usize)> {
        check_radius(r)?;
        let j = rng.random_range(0..x_star.len());
        let candidates = self.neighbors(&x_star.tokens()[j], r)?;
        let k = candidates[rng.random_range(0..candidates.len())];
        Ok((x_star.replaced(j, &self.vocabulary[k]), j))
    }
}

impl NeighborhoodGenerator<TokenInstance> for EmbeddingTable {
    fn id(&self) -> &'static str {
        "word2vec"
    }

    fn sample_batch(
        &self,
        x_star: &TokenInstance,
        r: f64,
        b: usize,
        rng: &mut dyn RngCore,
    ) -> Result<Vec<Generated<TokenInstance>>> {
        (0..b)
            .map(|_| {
                let (instance, j) = self.sample(x_star, r, rng)?;
                Ok(Generated {
                    instance,
                    perturbed_feature: Some(j),
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn table() -> EmbeddingTable {
        EmbeddingTable::read_text("3 2\ngood 0 0\ngreat 0.1 0\nbad 5 5\n".as_bytes()).unwrap()
    }

    #[test]
    fn zero_radius_is_identity() {
        let t = table();
        let x = TokenInstance::from_sentence("good bad").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            assert_eq!(t.sample(&x, 0.0, &mut rng).unwrap().0, x);
        }
    }

    #[test]
    fn neighbours_chosen_uniformly() {
        let t = table();
        let x = TokenInstance::from_sentence("good").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 10_000;
        let mut great = 0usize;
        for _ in 0..n {
            let (s, _) = t.sample(&x, 0.5, &mut rng).unwrap();
            match s.tokens()[0].as_str() {
                "great" => great += 1,
                "good" => {}
                other => panic!("unexpected {other}"),
            }
        }
        let p = great as f64 / n as f64;
        let sd = (0.25 / n as f64).sqrt();
        assert!((p - 0.5).abs() < 3.0 * sd, "{p}");
    }

    #[test]
    fn out_of_vocabulary_is_named() {
        let t = table();
        let x = TokenInstance::from_sentence("meh").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        match t.sample(&x, 1.0, &mut rng) {
            Err(Error::OutOfVocabulary(tok)) => assert_eq!(tok, "meh"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn cosine_distance_groups_by_direction() {
        let t = EmbeddingTable::read_text("3 2\na 1 0\nb 10 0.1\nc 0 1\n".as_bytes())
            .unwrap()
            .with_distance(EmbeddingDistance::Cosine);
        let n = t.neighbors("a", 0.01).unwrap();
        assert_eq!(n, vec![0, 1]);
    }

    #[test]
    fn text_format_round_trips() {
        let t = table();
        let mut buf = Vec::new();
        t.write_text(&mut buf).unwrap();
        let back = EmbeddingTable::read_text(buf.as_slice()).unwrap();
        assert_eq!(back.vocabulary(), t.vocabulary());
        assert_eq!(back.lookup("great"), t.lookup("great"));
    }

    #[test]
    fn malformed_files_rejected() {
        assert!(EmbeddingTable::read_text("2 2\na 0 0\n".as_bytes()).is_err());
        assert!(EmbeddingTable::read_text("1 2\na 0\n".as_bytes()).is_err());
        assert!(EmbeddingTable::read_text("2 1\na 0\na 1\n".as_bytes()).is_err());
    }
}
