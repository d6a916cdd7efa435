//! Planted low-rank non-negative matrices for recovery experiments.

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::data::RatingTriple;
use crate::seed;
use crate::{BridgeConfig, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantedConfig {
    pub n_rows: usize,
    pub n_cols: usize,
    pub rank: usize,
    /// Pre-bridge factors are drawn from U[-spread, spread].
    pub spread: f64,
    /// Fraction of the |U|·|I| cells that are observed.
    pub observed: f64,
    /// Standard deviation of additive Gaussian noise.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        Self {
            n_rows: 200,
            n_cols: 100,
            rank: 5,
            spread: 1.0,
            observed: 0.08,
            noise_sigma: 0.05,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Planted {
    pub n_rows: usize,
    pub n_cols: usize,
    /// Observed noisy entries.
    pub triples: Vec<RatingTriple>,
    /// Row-major true non-negative factors.
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub rank: usize,
}

impl Planted {
    /// Noise-free value of cell (u, i).
    pub fn truth(&self, u: usize, i: usize) -> f64 {
        let k = self.rank;
        self.p[u * k..(u + 1) * k]
            .iter()
            .zip(&self.q[i * k..(i + 1) * k])
            .map(|(a, b)| a * b)
            .sum()
    }
}

/// Draws bridged-uniform factors `P = g(U)`, `Q = g(V)`, then observes a
/// uniformly chosen subset of cells of `PQᵀ` plus noise.
pub fn planted(cfg: &PlantedConfig) -> Result<Planted> {
    if cfg.n_rows == 0 || cfg.n_cols == 0 || cfg.rank == 0 {
        return Err(Error::InvalidArgument("planted dimensions must be positive".into()));
    }
    if !(cfg.observed > 0.0 && cfg.observed <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "observed fraction must be in (0, 1], got {}",
            cfg.observed
        )));
    }
    let noise = Normal::new(0.0, cfg.noise_sigma)
        .map_err(|e| Error::InvalidArgument(format!("noise: {e}")))?;
    let bridge = BridgeConfig::default();
    let mut rng = seed::rng(cfg.seed);
    let mut factors = |n: usize| -> Vec<f64> {
        (0..n * cfg.rank)
            .map(|_| bridge.value(rng.random_range(-cfg.spread..=cfg.spread)))
            .collect()
    };
    let p = factors(cfg.n_rows);
    let q = factors(cfg.n_cols);
    let mut planted = Planted {
        n_rows: cfg.n_rows,
        n_cols: cfg.n_cols,
        triples: Vec::new(),
        p,
        q,
        rank: cfg.rank,
    };

    let cells = cfg.n_rows * cfg.n_cols;
    let n_obs = ((cells as f64) * cfg.observed).round() as usize;
    let mut picked = index::sample(&mut rng, cells, n_obs).into_vec();
    picked.sort_unstable();
    planted.triples = picked
        .into_iter()
        .map(|c| {
            let (u, i) = (c / cfg.n_cols, c % cfg.n_cols);
            RatingTriple::new(u, i, planted.truth(u, i) + noise.sample(&mut rng))
        })
        .collect();
    Ok(planted)
}
