//! Hashed character n-gram features.
//!
//! Text is mapped to a fixed-dimension sparse vector: every character
//! n-gram is hashed with FNV-1a (64-bit) into one of `n_buckets` buckets,
//! raw counts per bucket are log-scaled, and the vector is optionally
//! L2-normalized. The hash is unseeded so feature spaces are stable
//! across runs and checkpoints stay portable.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// How raw bucket counts become weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Weighting {
    /// weight = ln(1 + count)
    LogCount,
}

/// Featurizer configuration; serialized inside checkpoints so scoring
/// always matches training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    /// n-gram orders to extract, e.g. {2, 3}.
    pub ngram_orders: Vec<usize>,
    /// Feature dimension B.
    pub n_buckets: usize,
    pub weighting: Weighting,
    /// L2-normalize non-empty vectors.
    pub normalize: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            ngram_orders: vec![2, 3],
            n_buckets: 1 << 15,
            weighting: Weighting::LogCount,
            normalize: true,
        }
    }
}

impl FeatureConfig {
    /// Run-level validation: production configs need a power-of-two
    /// bucket count of at least 2^10. `featurize` itself works for any
    /// B ≥ 2, which tests use to force bucket collisions.
    pub fn validate(&self) -> Result<()> {
        if self.ngram_orders.is_empty() {
            return Err(Error::Config("feature.ngram_orders must be non-empty".into()));
        }
        if self.ngram_orders.iter().any(|&n| n == 0) {
            return Err(Error::Config("feature.ngram_orders entries must be >= 1".into()));
        }
        if self.n_buckets < (1 << 10) || !self.n_buckets.is_power_of_two() {
            return Err(Error::Config(format!(
                "feature.n_buckets must be a power of two >= 1024, got {}",
                self.n_buckets
            )));
        }
        Ok(())
    }
}

/// Sparse feature vector. Entries are sorted by bucket index, which fixes
/// the order of all downstream reductions.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseFeatures {
    entries: Vec<(usize, f64)>,
    dim: usize,
}

impl SparseFeatures {
    pub fn new(mut entries: Vec<(usize, f64)>, dim: usize) -> Result<Self> {
        entries.sort_unstable_by_key(|&(i, _)| i);
        if entries.iter().any(|&(i, _)| i >= dim) {
            return Err(Error::Shape(format!("feature index out of range (dim {dim})")));
        }
        Ok(SparseFeatures { entries, dim })
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn l2_norm(&self) -> f64 {
        self.entries.iter().map(|&(_, w)| w * w).sum::<f64>().sqrt()
    }

    /// Weight at a bucket (0 if absent); test convenience.
    pub fn get(&self, index: usize) -> f64 {
        self.entries
            .binary_search_by_key(&index, |&(i, _)| i)
            .map(|pos| self.entries[pos].1)
            .unwrap_or(0.0)
    }

    /// Returns an L2-normalized copy; the zero vector stays zero.
    pub fn normalized(&self) -> SparseFeatures {
        let norm = self.l2_norm();
        if norm == 0.0 {
            return self.clone();
        }
        SparseFeatures {
            entries: self.entries.iter().map(|&(i, w)| (i, w / norm)).collect(),
            dim: self.dim,
        }
    }

    pub fn dot(&self, other: &SparseFeatures) -> f64 {
        let mut a = self.entries.iter().peekable();
        let mut b = other.entries.iter().peekable();
        let mut acc = 0.0;
        while let (Some(&&(ia, va)), Some(&&(ib, vb))) = (a.peek(), b.peek()) {
            match ia.cmp(&ib) {
                std::cmp::Ordering::Less => {
                    a.next();
                }
                std::cmp::Ordering::Greater => {
                    b.next();
                }
                std::cmp::Ordering::Equal => {
                    acc += va * vb;
                    a.next();
                    b.next();
                }
            }
        }
        acc
    }

    /// Squared Euclidean distance via a merge walk over both entry lists.
    pub fn sq_distance(&self, other: &SparseFeatures) -> f64 {
        let mut a = self.entries.iter().peekable();
        let mut b = other.entries.iter().peekable();
        let mut acc = 0.0;
        loop {
            match (a.peek(), b.peek()) {
                (Some(&&(ia, va)), Some(&&(ib, vb))) => match ia.cmp(&ib) {
                    std::cmp::Ordering::Less => {
                        acc += va * va;
                        a.next();
                    }
                    std::cmp::Ordering::Greater => {
                        acc += vb * vb;
                        b.next();
                    }
                    std::cmp::Ordering::Equal => {
                        let d = va - vb;
                        acc += d * d;
                        a.next();
                        b.next();
                    }
                },
                (Some(&&(_, va)), None) => {
                    acc += va * va;
                    a.next();
                }
                (None, Some(&&(_, vb))) => {
                    acc += vb * vb;
                    b.next();
                }
                (None, None) => break,
            }
        }
        acc
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a 64-bit over a byte slice.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Maps text to its hashed n-gram vector. Empty or too-short text yields
/// the zero vector (the one case where a normalized vector has norm 0).
pub fn featurize(text: &str, config: &FeatureConfig) -> SparseFeatures {
    let chars: Vec<char> = text.chars().collect();
    let mut counts: HashMap<usize, u64> = HashMap::new();
    let mut gram = String::new();
    for &n in &config.ngram_orders {
        if n == 0 || chars.len() < n {
            continue;
        }
        for window in chars.windows(n) {
            gram.clear();
            gram.extend(window.iter());
            let bucket = (fnv1a(gram.as_bytes()) % config.n_buckets as u64) as usize;
            *counts.entry(bucket).or_insert(0) += 1;
        }
    }
    // Counts from different grams landing in one bucket add up before the
    // log transform.
    let mut entries: Vec<(usize, f64)> = match config.weighting {
        Weighting::LogCount => counts
            .into_iter()
            .map(|(i, c)| (i, (1.0 + c as f64).ln()))
            .collect(),
    };
    entries.sort_unstable_by_key(|&(i, _)| i);
    if config.normalize {
        let norm = entries.iter().map(|&(_, w)| w * w).sum::<f64>().sqrt();
        if norm > 0.0 {
            for e in &mut entries {
                e.1 /= norm;
            }
        }
    }
    SparseFeatures { entries, dim: config.n_buckets }
}
