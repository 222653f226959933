use crate::error::{Error, Result};
use crate::text::{fnv1a64, token_trigrams, tokenize};

use super::{Embedder, Embedding};

pub const DEFAULT_BUCKETS: usize = 4096;

/// Hashed term-frequency embedder over word tokens and character trigrams.
///
/// Each lowercase token adds 1 to bucket `fnv1a64("w:" + token) % buckets`
/// and each of its padded trigrams adds 1 to `fnv1a64("c:" + trigram) %
/// buckets`. The count vector is L2-normalized.
#[derive(Debug, Clone, Copy)]
pub struct HashedEmbedder {
    buckets: usize,
}

impl Default for HashedEmbedder {
    fn default() -> Self {
        HashedEmbedder {
            buckets: DEFAULT_BUCKETS,
        }
    }
}

impl HashedEmbedder {
    pub fn new(buckets: usize) -> Result<Self> {
        if buckets == 0 {
            return Err(Error::Config("embedder needs at least one bucket".into()));
        }
        Ok(HashedEmbedder { buckets })
    }

    pub fn buckets(&self) -> usize {
        self.buckets
    }

    fn bucket(&self, key: &str) -> usize {
        (fnv1a64(key.as_bytes()) % self.buckets as u64) as usize
    }
}

impl Embedder for HashedEmbedder {
    fn embed(&self, text: &str) -> Result<Embedding> {
        if text.trim().is_empty() {
            return Err(Error::validation("cannot embed empty text"));
        }
        let tokens = tokenize(text);
        if tokens.is_empty() {
            return Err(Error::validation(format!("no tokens in {text:?}")));
        }
        let mut counts = vec![0f64; self.buckets];
        for token in &tokens {
            counts[self.bucket(&format!("w:{token}"))] += 1.0;
            for tri in token_trigrams(token) {
                counts[self.bucket(&format!("c:{tri}"))] += 1.0;
            }
        }
        let norm = counts.iter().map(|c| c * c).sum::<f64>().sqrt();
        Ok(Embedding {
            values: counts.iter().map(|c| (c / norm) as f32).collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_unit_norm() {
        let e = HashedEmbedder::default();
        let a = e.embed("The nationality of Antoine Laurent Dantan is German").unwrap();
        let b = e.embed("The nationality of Antoine Laurent Dantan is German").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.dim(), DEFAULT_BUCKETS);
        assert!((a.dot(&a) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn distinct_texts_score_below_one() {
        let e = HashedEmbedder::default();
        let a = e.embed("aaa").unwrap();
        let z = e.embed("zzz").unwrap();
        assert!(a.dot(&z) < a.dot(&a));
    }

    #[test]
    fn empty_text_is_rejected() {
        let e = HashedEmbedder::default();
        assert!(e.embed("   ").is_err());
        assert!(e.embed("?!").is_err());
        assert!(HashedEmbedder::new(0).is_err());
    }
}
