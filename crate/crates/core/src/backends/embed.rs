use async_trait::async_trait;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::normalize_text;

/// Dimension of the fallback trigram embedding.
pub const FALLBACK_DIM: usize = 1024;

/// A text embedding. Entries are finite; the dimension is the length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::usage("embedding vectors must have dim > 0"));
        }
        if let Some(bad) = values.iter().position(|x| !x.is_finite()) {
            return Err(Error::usage(format!("non-finite embedding entry at {bad}")));
        }
        Ok(EmbeddingVector { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&x| x == 0.0)
    }
}

/// Anything that turns a batch of texts into vectors, order preserved.
#[async_trait]
pub trait Embedder: Send + Sync {
    async fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>>;
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Deterministic offline embedding: L2-normalized counts of hashed character
/// trigrams of the normalized text.
///
/// The text is padded with one space on each side so that one- and
/// two-character answers ("no", "a") still produce trigrams. Each trigram's
/// UTF-8 bytes are hashed with FNV-1a and bucketed mod 1024. Text that
/// normalizes to nothing yields the zero vector.
pub fn fallback_embed(text: &str) -> EmbeddingVector {
    let mut values = vec![0.0f64; FALLBACK_DIM];
    let norm = normalize_text(text);
    if !norm.is_empty() {
        let padded: Vec<char> = format!(" {} ", norm).chars().collect();
        let mut buf = [0u8; 12];
        for w in padded.windows(3) {
            let mut len = 0;
            for c in w {
                len += c.encode_utf8(&mut buf[len..]).len();
            }
            let bucket = (fnv1a64(&buf[..len]) % FALLBACK_DIM as u64) as usize;
            values[bucket] += 1.0;
        }
        let n = values.iter().map(|x| x * x).sum::<f64>().sqrt();
        for v in &mut values {
            *v /= n;
        }
    }
    EmbeddingVector { values }
}

/// In-process embedder backed by [`fallback_embed`].
#[derive(Debug, Clone, Copy, Default)]
pub struct TrigramEmbedder;

#[async_trait]
impl Embedder for TrigramEmbedder {
    async fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        if texts.is_empty() {
            return Err(Error::usage("embed requires at least one text"));
        }
        Ok(texts.iter().map(|t| fallback_embed(t)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapping::cosine;

    // Frozen from tests/oracles/trigram_oracle.py (exact trigram multiset
    // cosines; no bucket collisions for these strings).
    const COS_NO_PARKING_PARKING: f64 = 0.836660026534075;
    const COS_NO_PARKING_KAYAKING: f64 = 0.335410196624968;

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b" no"), 0xc2a78717cdd12ae4);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
    }

    #[test]
    fn deterministic_and_unit_norm() {
        let a = fallback_embed("A man riding a horse");
        let b = fallback_embed("a man  riding a horse.");
        assert_eq!(a, b);
        assert_eq!(a.dim(), FALLBACK_DIM);
        assert!((a.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_text_is_zero_vector() {
        let z = fallback_embed("  . ");
        assert!(z.is_zero());
        assert_eq!(z.dim(), FALLBACK_DIM);
    }

    #[test]
    fn short_answers_are_nonzero() {
        assert!(!fallback_embed("no").is_zero());
        assert!(!fallback_embed("a").is_zero());
    }

    #[test]
    fn cosine_fixture_constants() {
        let np = fallback_embed("no parking");
        let p = cosine(&np, &fallback_embed("parking")).unwrap();
        let k = cosine(&np, &fallback_embed("kayaking")).unwrap();
        assert!((p - COS_NO_PARKING_PARKING).abs() < 1e-12, "{p}");
        assert!((k - COS_NO_PARKING_KAYAKING).abs() < 1e-12, "{k}");
        assert!(p > k);
    }

    #[test]
    fn identical_and_disjoint() {
        let g = fallback_embed("grass");
        assert!((cosine(&g, &g).unwrap() - 1.0).abs() < 1e-9);
        let d = cosine(&fallback_embed("abc"), &fallback_embed("xyz")).unwrap();
        assert_eq!(d, 0.0);
    }

    #[tokio::test]
    async fn embedder_batch_contract() {
        let e = TrigramEmbedder;
        let ab = e.embed(&["a".into(), "b".into()]).await.unwrap();
        let ba = e.embed(&["b".into(), "a".into()]).await.unwrap();
        assert_eq!(ab[0], ba[1]);
        assert_eq!(ab[1], ba[0]);
        assert!(matches!(e.embed(&[]).await, Err(Error::Usage(_))));
    }
}
