//! Episode construction for meta-training.
//!
//! An episode is one simulated few-shot task: a support set the learner
//! adapts on and a query set it is scored on. With probability `p_cross`
//! an episode is cross-domain — normals from one domain, anomalies from
//! another — with the ordered pair taken from a round-robin cursor so
//! every pairing is visited equally often, while the cross/intra decision
//! itself stays stochastic.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Method;
use crate::corpus::{TextRecord, LABEL_ANOMALY, LABEL_NORMAL};
use crate::{Error, Result};

/// Episode shape and the cross-domain probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub p_cross: f64,
    pub n_support_anom: usize,
    pub n_support_norm: usize,
    pub n_query_anom: usize,
    pub n_query_norm: usize,
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p_cross) {
            return Err(Error::Config(format!("p_cross must be in [0,1], got {}", self.p_cross)));
        }
        if self.n_support_anom == 0
            || self.n_support_norm == 0
            || self.n_query_anom == 0
            || self.n_query_norm == 0
        {
            return Err(Error::Config("episode counts must all be >= 1".into()));
        }
        Ok(())
    }
}

/// Default episode shapes per method: prototypical uses balanced 5/5
/// support with 15/15 query; MAML uses imbalanced 5/50 support and query.
pub fn method_episode_shapes(method: Method) -> Result<EpisodeConfig> {
    match method {
        Method::Prototypical => Ok(EpisodeConfig {
            p_cross: 0.25,
            n_support_anom: 5,
            n_support_norm: 5,
            n_query_anom: 15,
            n_query_norm: 15,
        }),
        Method::Maml => Ok(EpisodeConfig {
            p_cross: 0.25,
            n_support_anom: 5,
            n_support_norm: 50,
            n_query_anom: 5,
            n_query_norm: 50,
        }),
        other => Err(Error::Config(format!("method '{other}' is not episodic"))),
    }
}

/// One meta-training task instance. Support and query are shuffled; all
/// normals carry label 0 and come from `normal_domain`, all anomalies
/// label 1 from `anomaly_domain`.
#[derive(Debug, Clone)]
pub struct Episode {
    pub support: Vec<(TextRecord, u8)>,
    pub query: Vec<(TextRecord, u8)>,
    pub normal_domain: String,
    pub anomaly_domain: String,
    pub is_cross_domain: bool,
    /// Set when a pool was smaller than the demand and sampling fell back
    /// to drawing with replacement.
    pub with_replacement: bool,
}

/// A domain's training records split by class, the sampler's input.
#[derive(Debug, Clone)]
pub struct DomainPools {
    pub domain: String,
    pub normals: Vec<TextRecord>,
    pub anomalies: Vec<TextRecord>,
}

impl DomainPools {
    /// Splits a record list by label.
    pub fn from_records(domain: &str, records: &[TextRecord]) -> Self {
        let mut normals = Vec::new();
        let mut anomalies = Vec::new();
        for r in records {
            if r.is_anomaly() {
                anomalies.push(r.clone());
            } else {
                normals.push(r.clone());
            }
        }
        DomainPools { domain: domain.to_string(), normals, anomalies }
    }
}

/// Draws `n` pool indices: a partial Fisher–Yates without replacement
/// when the pool suffices, otherwise uniform with replacement (flagged).
fn draw_indices(rng: &mut ChaCha8Rng, pool_len: usize, n: usize) -> (Vec<usize>, bool) {
    if pool_len >= n {
        let mut indices: Vec<usize> = (0..pool_len).collect();
        for i in 0..n {
            let j = rng.random_range(i..pool_len);
            indices.swap(i, j);
        }
        indices.truncate(n);
        (indices, false)
    } else {
        ((0..n).map(|_| rng.random_range(0..pool_len)).collect(), true)
    }
}

/// Stateful episode sampler: owns the rng, the round-robin cursor over
/// ordered domain pairs, and running cross-domain counts for logging.
pub struct EpisodeSampler {
    pools: Vec<DomainPools>,
    config: EpisodeConfig,
    rng: ChaCha8Rng,
    pairs: Vec<(usize, usize)>,
    pair_cursor: usize,
    episodes_sampled: usize,
    cross_sampled: usize,
}

impl EpisodeSampler {
    pub fn new(mut pools: Vec<DomainPools>, config: EpisodeConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        if pools.is_empty() {
            return Err(Error::Data("episode sampler needs at least one domain".into()));
        }
        pools.sort_by(|a, b| a.domain.cmp(&b.domain));
        if config.p_cross > 0.0 && pools.len() < 2 {
            return Err(Error::Config(
                "p_cross > 0 requires at least two domains".into(),
            ));
        }
        for p in &pools {
            if p.normals.is_empty() {
                return Err(Error::Data(format!("domain '{}' has no normal records", p.domain)));
            }
        }
        let n = pools.len();
        let mut pairs = Vec::with_capacity(n * n.saturating_sub(1));
        for a in 0..n {
            for b in 0..n {
                if a != b {
                    pairs.push((a, b));
                }
            }
        }
        Ok(EpisodeSampler {
            pools,
            config,
            rng: ChaCha8Rng::seed_from_u64(seed),
            pairs,
            pair_cursor: 0,
            episodes_sampled: 0,
            cross_sampled: 0,
        })
    }

    pub fn domains(&self) -> Vec<&str> {
        self.pools.iter().map(|p| p.domain.as_str()).collect()
    }

    /// Fraction of cross-domain episodes sampled so far.
    pub fn cross_fraction(&self) -> f64 {
        if self.episodes_sampled == 0 {
            0.0
        } else {
            self.cross_sampled as f64 / self.episodes_sampled as f64
        }
    }

    pub fn sample(&mut self) -> Result<Episode> {
        let cfg = self.config;
        let u: f64 = self.rng.random();
        let cross = u < cfg.p_cross;
        let (a, b) = if cross {
            let pair = self.pairs[self.pair_cursor % self.pairs.len()];
            self.pair_cursor += 1;
            pair
        } else {
            let d = self.rng.random_range(0..self.pools.len());
            (d, d)
        };
        if self.pools[b].anomalies.is_empty() {
            return Err(Error::Data(format!(
                "domain '{}' has an empty anomaly pool",
                self.pools[b].domain
            )));
        }

        // Support and query come from one joint draw so the query never
        // repeats a support pick unless the pool is too small.
        let n_norm = cfg.n_support_norm + cfg.n_query_norm;
        let n_anom = cfg.n_support_anom + cfg.n_query_anom;
        let (norm_idx, norm_replaced) =
            draw_indices(&mut self.rng, self.pools[a].normals.len(), n_norm);
        let (anom_idx, anom_replaced) =
            draw_indices(&mut self.rng, self.pools[b].anomalies.len(), n_anom);

        let norm_rec = |i: usize| (self.pools[a].normals[i].clone(), LABEL_NORMAL);
        let anom_rec = |i: usize| (self.pools[b].anomalies[i].clone(), LABEL_ANOMALY);

        let mut support: Vec<(TextRecord, u8)> = norm_idx[..cfg.n_support_norm]
            .iter()
            .map(|&i| norm_rec(i))
            .chain(anom_idx[..cfg.n_support_anom].iter().map(|&i| anom_rec(i)))
            .collect();
        let mut query: Vec<(TextRecord, u8)> = norm_idx[cfg.n_support_norm..]
            .iter()
            .map(|&i| norm_rec(i))
            .chain(anom_idx[cfg.n_support_anom..].iter().map(|&i| anom_rec(i)))
            .collect();
        support.shuffle(&mut self.rng);
        query.shuffle(&mut self.rng);

        self.episodes_sampled += 1;
        if cross {
            self.cross_sampled += 1;
        }
        Ok(Episode {
            support,
            query,
            normal_domain: self.pools[a].domain.clone(),
            anomaly_domain: self.pools[b].domain.clone(),
            is_cross_domain: cross,
            with_replacement: norm_replaced || anom_replaced,
        })
    }
}
