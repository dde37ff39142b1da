//! Deterministic hashed character-trigram embedder.
//!
//! Each trigram (three consecutive chars, UTF-8 encoded) is hashed with
//! 64-bit FNV-1a. The hash selects bucket `hash % dim` and contributes +1
//! when the hash is even, -1 when odd. Texts shorter than three chars
//! contribute one gram made of the whole text. Accumulation and the L2
//! normalization happen in f64; components are then rounded to f32.
//! A nonzero seed is hashed (8 little-endian bytes) before each gram.

use crate::datastore::{EmbeddingMatrix, TweetId};

pub const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
pub const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;
pub const DEFAULT_DIM: usize = 256;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    fnv1a64_from(FNV_OFFSET, bytes)
}

fn fnv1a64_from(mut hash: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrigramEmbedder {
    pub dim: usize,
    pub seed: u64,
}

impl Default for TrigramEmbedder {
    fn default() -> Self {
        TrigramEmbedder {
            dim: DEFAULT_DIM,
            seed: 0,
        }
    }
}

impl TrigramEmbedder {
    /// Embeds `text`; `None` if the text is empty or all grams cancel.
    pub fn embed(&self, text: &str) -> Option<Vec<f32>> {
        let chars: Vec<char> = text.chars().collect();
        if chars.is_empty() {
            return None;
        }
        let basis = if self.seed == 0 {
            FNV_OFFSET
        } else {
            fnv1a64_from(FNV_OFFSET, &self.seed.to_le_bytes())
        };
        let mut acc = vec![0f64; self.dim];
        let mut buf = [0u8; 12];
        let width = chars.len().min(3);
        for gram in chars.windows(width) {
            let mut len = 0;
            for c in gram {
                len += c.encode_utf8(&mut buf[len..]).len();
            }
            let h = fnv1a64_from(basis, &buf[..len]);
            let bucket = (h % self.dim as u64) as usize;
            acc[bucket] += if h & 1 == 0 { 1.0 } else { -1.0 };
        }
        let norm = acc.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return None;
        }
        Some(acc.iter().map(|x| (x / norm) as f32).collect())
    }

    /// Embeds a batch into a matrix. Texts that embed to zero are skipped
    /// and returned.
    pub fn embed_all<'a>(
        &self,
        texts: impl IntoIterator<Item = (TweetId, &'a str)>,
    ) -> (EmbeddingMatrix, Vec<TweetId>) {
        let mut m = EmbeddingMatrix::new(self.dim);
        let mut skipped = Vec::new();
        for (id, text) in texts {
            match self.embed(text) {
                Some(v) => m
                    .insert(id, v)
                    .expect("embedder output is unit norm with fixed dim"),
                None => skipped.push(id),
            }
        }
        (m, skipped)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_reference_vectors() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn unit_norm_and_deterministic() {
        let e = TrigramEmbedder::default();
        let v = e.embed("modi rocks").unwrap();
        assert_eq!(v.len(), 256);
        let n: f64 = v.iter().map(|&x| f64::from(x).powi(2)).sum::<f64>().sqrt();
        assert!((n - 1.0).abs() < 1e-6);
        assert_eq!(v, e.embed("modi rocks").unwrap());
        assert_ne!(v, e.embed("corruption ends").unwrap());
    }

    #[test]
    fn seed_changes_vectors() {
        let a = TrigramEmbedder::default().embed("hello world").unwrap();
        let b = TrigramEmbedder { seed: 3, ..Default::default() }
            .embed("hello world")
            .unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn single_gram_matches_manual_hash() {
        let e = TrigramEmbedder::default();
        let v = e.embed("abc").unwrap();
        let h = fnv1a64(b"abc");
        let bucket = (h % 256) as usize;
        let sign = if h & 1 == 0 { 1.0 } else { -1.0 };
        assert_eq!(v[bucket], sign);
        assert_eq!(v.iter().filter(|&&x| x != 0.0).count(), 1);
        // short text uses the whole string as its gram
        let w = e.embed("ab").unwrap();
        assert_eq!(w[(fnv1a64(b"ab") % 256) as usize].abs(), 1.0);
        assert!(e.embed("").is_none());
    }
}
