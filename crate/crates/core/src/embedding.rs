//! Dense design embeddings and inner-product math.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::provider::{EmbeddingProvider, EmbeddingSource, ProviderError};
use crate::scalar::Scalar;

pub const DEFAULT_FALLBACK_DIM: usize = 256;
pub const MIN_FALLBACK_DIM: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbeddingError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("text has no tokens")]
    NoTokens,
    #[error("empty text")]
    EmptyText,
    #[error("embedding dimension must be at least {MIN_FALLBACK_DIM}, got {0}")]
    DimensionTooSmall(usize),
    #[error("embedding has non-finite entries")]
    NonFinite,
    #[error("embedding has zero dimension")]
    ZeroDimension,
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector<T> {
    values: Vec<T>,
    source: EmbeddingSource,
}

impl<T: Scalar> EmbeddingVector<T> {
    pub fn new(values: Vec<T>, source: EmbeddingSource) -> Result<Self, EmbeddingError> {
        if values.is_empty() {
            return Err(EmbeddingError::ZeroDimension);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFinite);
        }
        Ok(EmbeddingVector { values, source })
    }

    pub fn from_f64(values: &[f64], source: EmbeddingSource) -> Result<Self, EmbeddingError> {
        Self::new(values.iter().map(|&v| T::lit(v)).collect(), source)
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn source(&self) -> EmbeddingSource {
        self.source
    }

    pub fn norm(&self) -> T {
        self.values.iter().fold(T::zero(), |a, &v| a + v * v).sqrt()
    }

    pub fn cast<U: Scalar>(&self) -> EmbeddingVector<U> {
        EmbeddingVector {
            values: self.values.iter().map(|v| U::lit(v.as_f64())).collect(),
            source: self.source,
        }
    }
}

/// `Σ a_i b_i`.
pub fn inner_product<T: Scalar>(a: &[T], b: &[T]) -> Result<T, EmbeddingError> {
    if a.len() != b.len() {
        return Err(EmbeddingError::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y))
}

/// Inner product accumulated in `f64` regardless of storage precision.
pub fn inner_product_wide<T: Scalar>(a: &[T], b: &[T]) -> Result<f64, EmbeddingError> {
    if a.len() != b.len() {
        return Err(EmbeddingError::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(a.iter()
        .zip(b)
        .fold(0.0f64, |acc, (&x, &y)| acc + x.as_f64() * y.as_f64()))
}

pub fn cosine_similarity<T: Scalar>(a: &[T], b: &[T]) -> Result<f64, EmbeddingError> {
    let dot = inner_product_wide(a, b)?;
    let na = inner_product_wide(a, a)?.sqrt();
    let nb = inner_product_wide(b, b)?.sqrt();
    Ok(if na == 0.0 || nb == 0.0 { 0.0 } else { dot / (na * nb) })
}

/// FNV-1a over the bytes, finished with the SplitMix64 mixer.
pub fn term_hash(term: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in term.as_bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix_finish(h)
}

pub(crate) fn splitmix_finish(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Lowercased alphanumeric runs.
pub fn tokenize_terms(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

/// Hashed bag-of-words term frequencies, L2-normalized.
pub fn local_fallback_embed<T: Scalar>(text: &str, dim: usize) -> Result<EmbeddingVector<T>, EmbeddingError> {
    if dim < MIN_FALLBACK_DIM {
        return Err(EmbeddingError::DimensionTooSmall(dim));
    }
    let mut counts = vec![0u64; dim];
    let mut any = false;
    for term in tokenize_terms(text) {
        counts[(term_hash(&term) % dim as u64) as usize] += 1;
        any = true;
    }
    if !any {
        return Err(EmbeddingError::NoTokens);
    }
    let norm = counts.iter().map(|&c| (c * c) as f64).sum::<f64>().sqrt();
    let values = counts.iter().map(|&c| T::lit(c as f64 / norm)).collect();
    Ok(EmbeddingVector {
        values,
        source: EmbeddingSource::LocalFallback,
    })
}

/// Embeds `text` with a provider, checking against a database dimension.
pub fn embed_text<T: Scalar>(
    provider: &dyn EmbeddingProvider,
    text: &str,
    expected_dim: Option<usize>,
) -> Result<EmbeddingVector<T>, EmbeddingError> {
    if text.trim().is_empty() {
        return Err(EmbeddingError::EmptyText);
    }
    let raw = provider.embed(text)?;
    if let Some(expected) = expected_dim {
        if raw.len() != expected {
            return Err(EmbeddingError::DimensionMismatch {
                expected,
                actual: raw.len(),
            });
        }
    }
    EmbeddingVector::from_f64(&raw, provider.source())
}

/// Provider backed by [`local_fallback_embed`].
#[derive(Debug, Clone, Copy)]
pub struct LocalEmbeddingProvider {
    pub dim: usize,
}

impl Default for LocalEmbeddingProvider {
    fn default() -> Self {
        LocalEmbeddingProvider {
            dim: DEFAULT_FALLBACK_DIM,
        }
    }
}

impl EmbeddingProvider for LocalEmbeddingProvider {
    fn embed(&self, text: &str) -> Result<Vec<f64>, ProviderError> {
        local_fallback_embed::<f64>(text, self.dim)
            .map(|v| v.values)
            .map_err(|e| ProviderError::Malformed(e.to_string()))
    }

    fn fingerprint(&self) -> String {
        format!("local-hash-bow:{}", self.dim)
    }

    fn source(&self) -> EmbeddingSource {
        EmbeddingSource::LocalFallback
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provider::ScriptedEmbeddingProvider;
    use proptest::prelude::*;

    #[test]
    fn scripted_provider_vector() {
        let p = ScriptedEmbeddingProvider::from_pairs([("adder", vec![0.1, 0.2, 0.3])]);
        let v: EmbeddingVector<f64> = embed_text(&p, "adder", None).unwrap();
        assert_eq!(v.values(), &[0.1, 0.2, 0.3]);
        assert_eq!(v.dim(), 3);
        let w: EmbeddingVector<f64> = embed_text(&p, "adder", Some(3)).unwrap();
        assert_eq!(v, w);
    }

    #[test]
    fn provider_dimension_mismatch() {
        let p = ScriptedEmbeddingProvider::from_pairs([("x", vec![0.5; 384])]);
        assert_eq!(
            embed_text::<f32>(&p, "x", Some(512)),
            Err(EmbeddingError::DimensionMismatch {
                expected: 512,
                actual: 384
            })
        );
    }

    #[test]
    fn repeated_word_hits_one_bucket() {
        let v = local_fallback_embed::<f64>("adder adder", 16).unwrap();
        let nonzero: Vec<_> = v.values().iter().filter(|&&x| x != 0.0).collect();
        assert_eq!(nonzero, vec![&1.0]);
        let bucket = (term_hash("adder") % 16) as usize;
        assert_eq!(v.values()[bucket], 1.0);
    }

    #[test]
    fn bag_of_words_and_errors() {
        let a = local_fallback_embed::<f64>("ripple carry adder", 64).unwrap();
        let b = local_fallback_embed::<f64>("Adder, carry; RIPPLE", 64).unwrap();
        assert_eq!(a, b);
        assert_eq!(local_fallback_embed::<f64>("   ", 64), Err(EmbeddingError::NoTokens));
        assert_eq!(local_fallback_embed::<f64>("x", 4), Err(EmbeddingError::DimensionTooSmall(4)));
    }

    #[test]
    fn hash_constants_are_fixed() {
        // Pinned so that stored fallback embeddings stay valid across releases.
        assert_eq!(term_hash(""), splitmix_finish(0xcbf2_9ce4_8422_2325));
        assert_eq!(term_hash("adder"), term_hash("adder"));
        assert_ne!(term_hash("adder"), term_hash("alu"));
    }

    #[test]
    fn inner_product_examples() {
        assert_eq!(inner_product(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(inner_product(&[1.0f32, 2.0], &[3.0, 4.0]).unwrap(), 11.0);
        assert!(matches!(
            inner_product(&[1.0], &[1.0, 2.0]),
            Err(EmbeddingError::DimensionMismatch { .. })
        ));
    }

    proptest! {
        #[test]
        fn fallback_is_unit_norm(text in "[a-z ]{0,60}[a-z][a-z ]{0,60}", dim in 8usize..300) {
            let v = local_fallback_embed::<f64>(&text, dim).unwrap();
            prop_assert!((v.norm() - 1.0).abs() <= 1e-9);
            let v32 = local_fallback_embed::<f32>(&text, dim).unwrap();
            prop_assert!((v32.norm() - 1.0).abs() <= 1e-5);
        }

        #[test]
        fn inner_product_symmetric_bilinear(
            a in proptest::collection::vec(-10.0f64..10.0, 16),
            b in proptest::collection::vec(-10.0f64..10.0, 16),
            c in proptest::collection::vec(-10.0f64..10.0, 16),
            s in -5.0f64..5.0,
        ) {
            let ab = inner_product(&a, &b).unwrap();
            prop_assert!((ab - inner_product(&b, &a).unwrap()).abs() <= 1e-9);
            let sa_c: Vec<f64> = a.iter().zip(&c).map(|(x, y)| s * x + y).collect();
            let lhs = inner_product(&sa_c, &b).unwrap();
            let rhs = s * ab + inner_product(&c, &b).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs()));
            prop_assert!(inner_product(&a, &a).unwrap() >= 0.0);
        }
    }
}
