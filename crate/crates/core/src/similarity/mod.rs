//! The pairwise writing-style similarity function s: T x T -> [0,1].
//!
//! Two interchangeable backends: a deterministic character-n-gram cosine
//! baseline and a Siamese convolutional network trained on labeled pairs.

mod net;
mod train;
mod vocab;

pub use net::{ArchShape, ConvLayer, DenseLayer, EncodeCache, Gradients, SiameseNet};
pub use train::{evaluate, train, EpochStats, TrainConfig, TrainingLog};
pub use vocab::CharVocab;

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// A similarity backend. Implementations must be symmetric in their arguments.
pub trait SimilarityModel {
    fn similarity(&self, a: &str, b: &str) -> Result<f64>;
}

/// Character n-gram cosine baseline.
#[derive(Debug, Clone, Copy)]
pub struct NgramCosine {
    pub n: usize,
}

impl Default for NgramCosine {
    fn default() -> Self {
        NgramCosine { n: 4 }
    }
}

impl NgramCosine {
    fn counts(&self, text: &str) -> Result<BTreeMap<String, f64>> {
        let chars: Vec<char> = text.chars().collect();
        if chars.len() < self.n {
            return Err(Error::Data(format!(
                "text of {} chars is shorter than n-gram size {}",
                chars.len(),
                self.n
            )));
        }
        let mut counts = BTreeMap::new();
        for w in chars.windows(self.n) {
            *counts.entry(w.iter().collect::<String>()).or_insert(0.0) += 1.0;
        }
        Ok(counts)
    }
}

impl SimilarityModel for NgramCosine {
    fn similarity(&self, a: &str, b: &str) -> Result<f64> {
        let ca = self.counts(a)?;
        let cb = self.counts(b)?;
        let mut dot = 0.0;
        // BTreeMap iteration keeps the arithmetic path order-independent of
        // the argument order, so s(a,b) == s(b,a) bit-exactly.
        for (gram, &x) in &ca {
            if let Some(&y) = cb.get(gram) {
                dot += x * y;
            }
        }
        let na: f64 = ca.values().map(|v| v * v).sum::<f64>().sqrt();
        let nb: f64 = cb.values().map(|v| v * v).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            return Ok(0.0);
        }
        Ok((dot / (na * nb)).clamp(0.0, 1.0))
    }
}

/// Convenience alias for `NgramCosine::similarity`.
pub fn ngram_cosine(a: &str, b: &str, n: usize) -> Result<f64> {
    NgramCosine { n }.similarity(a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn self_similarity_is_one() {
        let s = ngram_cosine("abcdefgh", "abcdefgh", 4).unwrap();
        assert_abs_diff_eq!(s, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn disjoint_grams_give_zero() {
        let s = ngram_cosine("aaaaaa", "bbbbbb", 3).unwrap();
        assert_abs_diff_eq!(s, 0.0);
    }

    #[test]
    fn hand_computed_bigram_case() {
        // "aaaa" -> {aa:3}; "aaab" -> {aa:2, ab:1}; cos = 6 / (3 * sqrt(5)).
        let s = ngram_cosine("aaaa", "aaab", 2).unwrap();
        assert_abs_diff_eq!(s, 6.0 / (3.0 * 5.0f64.sqrt()), epsilon = 1e-12);
        assert_abs_diff_eq!(s, 0.8944, epsilon = 1e-4);
    }

    #[test]
    fn too_short_text_errors() {
        assert!(ngram_cosine("abc", "abcdef", 4).is_err());
    }

    #[test]
    fn symmetric_bit_exact() {
        let a = "det er en tekst om noget";
        let b = "en helt anden tekst om andet";
        let ab = ngram_cosine(a, b, 4).unwrap();
        let ba = ngram_cosine(b, a, 4).unwrap();
        assert_eq!(ab.to_bits(), ba.to_bits());
    }
}
