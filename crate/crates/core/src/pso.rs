//! Particle swarm self-adaptation of `(α, β, η, λ)`.
//!
//! Every particle owns a private copy of the factor model. One outer
//! iteration trains each particle for one SGD epoch under its current
//! position, scores it by validation RMSE, refreshes personal and global
//! bests, and then moves the swarm:
//!
//! ```text
//! v ← w v + c1 r1 (pb − s) + c2 r2 (gb − s),   v clamped to ±v_max
//! s ← s + v,                                   s clamped into the box
//! ```
//!
//! Bests are decided by comparing validation RMSE directly (lower wins,
//! ties keep the incumbent). The normalised RMSE-change ratio
//! `(A_j^t − A_j^{t−1}) / (A_q^t − A_q^{t−1})` is recorded in the trace for
//! inspection only.

use std::io::Write;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;

use crate::data::{HdiDataset, RatingTriple};
use crate::eval::rmse_scaled;
use crate::model::FactorState;
use crate::seed;
use crate::sgd::{sgd_epoch, Hyperparams};
use crate::{BridgeConfig, Error, Result};

pub const DIMS: usize = 4;
pub const DIM_NAMES: [&str; DIMS] = ["alpha", "beta", "eta", "lambda"];

/// Per-dimension bounds in `(α, β, η, λ)` order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchBox {
    pub lower: [f64; DIMS],
    pub upper: [f64; DIMS],
}

impl Default for SearchBox {
    fn default() -> Self {
        Self {
            lower: [0.1, 0.1, 2f64.powi(-8), 2f64.powi(-7)],
            upper: [1.5, 1.5, 2f64.powi(-4), 2f64.powi(-3)],
        }
    }
}

impl SearchBox {
    pub fn validate(&self) -> Result<()> {
        for d in 0..DIMS {
            let (lo, hi) = (self.lower[d], self.upper[d]);
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidArgument(format!(
                    "search box for {} must satisfy lower < upper, got [{lo}, {hi}]",
                    DIM_NAMES[d]
                )));
            }
        }
        // α, β > 0 and η, λ ≥ 0 everywhere in the box
        if self.lower[0] <= 0.0 || self.lower[1] <= 0.0 || self.lower[2] < 0.0 || self.lower[3] < 0.0 {
            return Err(Error::InvalidArgument(
                "search box admits invalid hyper-parameters".into(),
            ));
        }
        Ok(())
    }

    pub fn contains(&self, s: &[f64; DIMS]) -> bool {
        (0..DIMS).all(|d| s[d] >= self.lower[d] && s[d] <= self.upper[d])
    }

    pub fn contains_hp(&self, hp: &Hyperparams) -> bool {
        self.contains(&hp.to_array())
    }

    pub fn range(&self, d: usize) -> f64 {
        self.upper[d] - self.lower[d]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwarmConfig {
    pub w: f64,
    pub c1: f64,
    pub c2: f64,
    pub particles: usize,
    pub search: SearchBox,
    pub v_max: [f64; DIMS],
}

impl SwarmConfig {
    /// Standard constants `w = 0.729`, `c1 = c2 = 2`, `q = 10`, with
    /// `v_max = 0.2 · (upper − lower)` per dimension.
    pub fn new(search: SearchBox) -> Self {
        let v_max = std::array::from_fn(|d| 0.2 * search.range(d));
        Self {
            w: 0.729,
            c1: 2.0,
            c2: 2.0,
            particles: 10,
            search,
            v_max,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.search.validate()?;
        if self.particles < 2 {
            return Err(Error::InvalidArgument(format!(
                "swarm needs at least 2 particles, got {}",
                self.particles
            )));
        }
        for (name, v) in [("w", self.w), ("c1", self.c1), ("c2", self.c2)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be non-negative, got {v}")));
            }
        }
        if self.v_max.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidArgument("velocity caps must be positive".into()));
        }
        Ok(())
    }
}

impl Default for SwarmConfig {
    fn default() -> Self {
        Self::new(SearchBox::default())
    }
}

#[derive(Debug, Clone)]
pub struct Particle {
    pub position: [f64; DIMS],
    pub velocity: [f64; DIMS],
    pub best_position: [f64; DIMS],
    /// `+∞` until the first evaluation.
    pub best_score: f64,
    pub model: FactorState,
    /// Set when an epoch aborted; the particle is skipped from then on.
    pub frozen: bool,
}

impl Particle {
    pub fn hyperparams(&self) -> Hyperparams {
        Hyperparams::from_array(self.position)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlobalBest {
    pub position: [f64; DIMS],
    pub score: f64,
    pub particle: usize,
}

#[derive(Debug, Clone)]
pub struct Swarm {
    pub config: SwarmConfig,
    pub particles: Vec<Particle>,
    pub global_best: Option<GlobalBest>,
    /// gb score after every `update_bests` call.
    pub gb_history: Vec<f64>,
}

/// Uniform positions in the box, zero velocities, and identical copies of
/// `template` as every particle's model.
pub fn init_swarm(cfg: &SwarmConfig, template: &FactorState, seed: u64) -> Result<Swarm> {
    cfg.validate()?;
    let mut rng = seed::rng(seed::derive(seed, &[seed::tag::SWARM_INIT]));
    let particles = (0..cfg.particles)
        .map(|_| {
            let position: [f64; DIMS] = std::array::from_fn(|d| {
                rng.random_range(cfg.search.lower[d]..=cfg.search.upper[d])
            });
            Particle {
                position,
                velocity: [0.0; DIMS],
                best_position: position,
                best_score: f64::INFINITY,
                model: template.clone(),
                frozen: false,
            }
        })
        .collect();
    Ok(Swarm {
        config: *cfg,
        particles,
        global_best: None,
        gb_history: Vec::new(),
    })
}

/// Outcome of one [`Swarm::update_bests`] call.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BestsUpdate {
    pub personal_improvements: usize,
    /// Particle that became the new global best, if any.
    pub new_global: Option<usize>,
}

impl Swarm {
    pub fn global_best_score(&self) -> f64 {
        self.global_best.map_or(f64::INFINITY, |g| g.score)
    }

    /// Replaces the position of particle `j`, e.g. to seed it with a known
    /// configuration. The position must lie inside the box.
    pub fn set_position(&mut self, j: usize, hp: &Hyperparams) -> Result<()> {
        let s = hp.to_array();
        if !self.config.search.contains(&s) {
            return Err(Error::InvalidArgument(format!("{hp:?} lies outside the search box")));
        }
        let p = self.particles.get_mut(j).ok_or(Error::OutOfBounds {
            what: "particle",
            index: j,
            len: self.config.particles,
        })?;
        p.position = s;
        p.best_position = s;
        Ok(())
    }

    /// `scores[j]` is the fitness of particle `j` at its current position,
    /// `None` for frozen particles. Strict improvement is required to
    /// replace a personal or global best.
    pub fn update_bests(&mut self, scores: &[Option<f64>]) -> Result<BestsUpdate> {
        if scores.len() != self.particles.len() {
            return Err(Error::InvalidArgument(format!(
                "{} scores for {} particles",
                scores.len(),
                self.particles.len()
            )));
        }
        if let Some(bad) = scores.iter().flatten().find(|s| !s.is_finite()) {
            return Err(Error::Domain(format!("fitness must be finite, got {bad}")));
        }
        let mut personal_improvements = 0;
        for (p, s) in self.particles.iter_mut().zip(scores) {
            if let Some(s) = *s {
                if s < p.best_score {
                    p.best_score = s;
                    p.best_position = p.position;
                    personal_improvements += 1;
                }
            }
        }
        let mut new_global = None;
        let mut incumbent = self.global_best_score();
        for (j, s) in scores.iter().enumerate() {
            if let Some(s) = *s {
                if s < incumbent {
                    incumbent = s;
                    new_global = Some(j);
                }
            }
        }
        if let Some(j) = new_global {
            self.global_best = Some(GlobalBest {
                position: self.particles[j].position,
                score: incumbent,
                particle: j,
            });
        }
        self.gb_history.push(self.global_best_score());
        Ok(BestsUpdate {
            personal_improvements,
            new_global,
        })
    }

    /// One velocity/position update of every live particle. `r1`, `r2` are
    /// drawn per particle and per dimension (also for frozen particles, so
    /// the random stream does not depend on which particles froze).
    pub fn evolve_step<R: Rng>(&mut self, rng: &mut R) -> Result<()> {
        let gb = self
            .global_best
            .ok_or_else(|| Error::InvalidArgument("evolve_step before any evaluation".into()))?;
        let cfg = self.config;
        for p in &mut self.particles {
            for d in 0..DIMS {
                let r1: f64 = rng.random();
                let r2: f64 = rng.random();
                if p.frozen {
                    continue;
                }
                let v = cfg.w * p.velocity[d]
                    + cfg.c1 * r1 * (p.best_position[d] - p.position[d])
                    + cfg.c2 * r2 * (gb.position[d] - p.position[d]);
                let v = v.clamp(-cfg.v_max[d], cfg.v_max[d]);
                let s = p.position[d] + v;
                let (lo, hi) = (cfg.search.lower[d], cfg.search.upper[d]);
                if s < lo || s > hi {
                    p.position[d] = s.clamp(lo, hi);
                    p.velocity[d] = 0.0;
                } else {
                    p.position[d] = s;
                    p.velocity[d] = v;
                }
            }
        }
        Ok(())
    }
}

/// Validation RMSE of a particle's own predictions.
pub fn fitness(particle: &Particle, validation: &[RatingTriple], cfg: &BridgeConfig) -> Result<f64> {
    rmse_scaled(&particle.model, validation, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveOptions {
    pub max_iters: usize,
    /// Stop once the global best improves by no more than `tol` for
    /// `patience` consecutive iterations.
    pub tol: f64,
    pub patience: usize,
    pub seed: u64,
    /// Worker threads for particle epochs; 0 uses all cores, 1 runs serially.
    pub threads: usize,
    /// Starting position for particle 0.
    pub initial_position: Option<Hyperparams>,
    /// Scan every particle's derived factors after each epoch.
    pub audit: bool,
}

impl Default for AdaptiveOptions {
    fn default() -> Self {
        Self {
            max_iters: 100,
            tol: 1e-5,
            patience: 2,
            seed: 0,
            threads: 0,
            initial_position: None,
            audit: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleRecord {
    pub particle: usize,
    /// Position used for this iteration's epoch.
    pub position: [f64; DIMS],
    /// Validation RMSE; `None` when the particle is frozen.
    pub score: Option<f64>,
    /// Normalised RMSE-change ratio against the last particle; logged only.
    pub change_ratio: Option<f64>,
    pub audit_violations: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub particles: Vec<ParticleRecord>,
    pub gb_score: f64,
    pub gb_position: [f64; DIMS],
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct AdaptiveRun {
    /// The global-best particle's model, checkpointed when it set the best.
    pub state: FactorState,
    pub hyperparams: Hyperparams,
    pub best_score: f64,
    pub iterations: usize,
    pub trace: Vec<IterationRecord>,
    pub total_seconds: f64,
}

struct EpochOutcome {
    score: Option<f64>,
    audit: Option<usize>,
}

fn step_particle(
    j: usize,
    p: &mut Particle,
    dataset: &HdiDataset,
    bridge: &BridgeConfig,
    epoch_seed: u64,
    audit: bool,
) -> EpochOutcome {
    if p.frozen {
        return EpochOutcome {
            score: None,
            audit: None,
        };
    }
    let hp = p.hyperparams();
    let result = sgd_epoch(&mut p.model, dataset.train(), &hp, bridge, epoch_seed)
        .and_then(|_| fitness(p, dataset.validation(), bridge));
    match result {
        Ok(score) if score.is_finite() => EpochOutcome {
            score: Some(score),
            audit: audit.then(|| p.model.audit(bridge)),
        },
        Ok(score) => {
            log::warn!("particle {j} produced fitness {score}; freezing it");
            p.frozen = true;
            EpochOutcome { score: None, audit: None }
        }
        Err(e) => {
            log::warn!("particle {j} aborted ({e}); freezing it");
            p.frozen = true;
            EpochOutcome { score: None, audit: None }
        }
    }
}

/// Runs the adaptive outer loop from the factor template `init` and returns
/// the checkpoint of the particle that achieved the global-best score.
pub fn run_adaptive(
    dataset: &HdiDataset,
    init: &FactorState,
    cfg: &SwarmConfig,
    bridge: &BridgeConfig,
    opts: &AdaptiveOptions,
) -> Result<AdaptiveRun> {
    if dataset.validation().is_empty() {
        return Err(Error::EmptyInput("adaptive training needs a validation set"));
    }
    if init.n_rows() < dataset.n_rows() || init.n_cols() < dataset.n_cols() {
        return Err(Error::InvalidArgument(format!(
            "model is {}×{} but dataset is {}×{}",
            init.n_rows(),
            init.n_cols(),
            dataset.n_rows(),
            dataset.n_cols()
        )));
    }
    let started = Instant::now();
    let mut swarm = init_swarm(cfg, init, opts.seed)?;
    if let Some(hp) = &opts.initial_position {
        swarm.set_position(0, hp)?;
    }
    let pool = match opts.threads {
        1 => None,
        n => Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?,
        ),
    };

    let mut checkpoint: Option<(FactorState, [f64; DIMS])> = None;
    let mut prev_scores: Vec<Option<f64>> = vec![None; cfg.particles];
    let mut trace = Vec::new();
    let mut stalled = 0;

    for iteration in 1..=opts.max_iters {
        let t0 = Instant::now();
        let positions: Vec<[f64; DIMS]> = swarm.particles.iter().map(|p| p.position).collect();
        let seeds: Vec<u64> = (0..cfg.particles)
            .map(|j| {
                seed::derive(
                    opts.seed,
                    &[seed::tag::PARTICLE_EPOCH, j as u64, iteration as u64],
                )
            })
            .collect();

        let work = |(j, p): (usize, &mut Particle)| {
            step_particle(j, p, dataset, bridge, seeds[j], opts.audit)
        };
        let outcomes: Vec<EpochOutcome> = match &pool {
            None => swarm.particles.iter_mut().enumerate().map(work).collect(),
            Some(pool) => pool.install(|| {
                swarm
                    .particles
                    .par_iter_mut()
                    .enumerate()
                    .map(work)
                    .collect()
            }),
        };
        if swarm.particles.iter().all(|p| p.frozen) {
            return Err(Error::SwarmCollapsed(cfg.particles));
        }

        let scores: Vec<Option<f64>> = outcomes.iter().map(|o| o.score).collect();
        let prev_gb = swarm.global_best_score();
        let update = swarm.update_bests(&scores)?;
        if let Some(j) = update.new_global {
            checkpoint = Some((swarm.particles[j].model.clone(), positions[j]));
        }
        let gb = swarm.global_best.expect("at least one live particle was scored");

        let ratios = change_ratios(&scores, &prev_scores);
        trace.push(IterationRecord {
            iteration,
            particles: outcomes
                .iter()
                .enumerate()
                .map(|(j, o)| ParticleRecord {
                    particle: j,
                    position: positions[j],
                    score: o.score,
                    change_ratio: ratios[j],
                    audit_violations: o.audit,
                })
                .collect(),
            gb_score: gb.score,
            gb_position: gb.position,
            seconds: t0.elapsed().as_secs_f64(),
        });
        log::debug!("iteration {iteration}: gb {:.6} at {:?}", gb.score, gb.position);
        prev_scores = scores;

        // the first iteration improves on +∞ by +∞, which only an infinite
        // tolerance fails to exceed
        let improvement = prev_gb - gb.score;
        if improvement > opts.tol {
            stalled = 0;
        } else {
            stalled += 1;
        }
        if stalled >= opts.patience {
            break;
        }
        if iteration < opts.max_iters {
            let mut rng = seed::rng(seed::derive(
                opts.seed,
                &[seed::tag::SWARM_EVOLVE, iteration as u64],
            ));
            swarm.evolve_step(&mut rng)?;
        }
    }

    let best_score = swarm.global_best_score();
    let (state, position) = match checkpoint {
        Some(c) => c,
        None => (init.clone(), swarm.particles[0].position),
    };
    Ok(AdaptiveRun {
        state,
        hyperparams: Hyperparams::from_array(position),
        best_score,
        iterations: trace.len(),
        trace,
        total_seconds: started.elapsed().as_secs_f64(),
    })
}

/// `(A_j^t − A_j^{t−1}) / (A_q^t − A_q^{t−1})` with `q` the last particle.
fn change_ratios(now: &[Option<f64>], before: &[Option<f64>]) -> Vec<Option<f64>> {
    let delta = |j: usize| match (now[j], before[j]) {
        (Some(a), Some(b)) => Some(a - b),
        _ => None,
    };
    let last = now.len() - 1;
    let denom = delta(last).filter(|d| *d != 0.0);
    (0..now.len())
        .map(|j| Some(delta(j)? / denom?))
        .collect()
}

/// Writes one record per particle per iteration,
/// `iteration,particle,alpha,beta,eta,lambda,score,change_ratio`, followed by
/// a `gb` summary record carrying the global-best position and score. No
/// timings are written, so the file is reproducible bit for bit.
pub fn write_trace<W: Write>(trace: &[IterationRecord], mut sink: W) -> Result<()> {
    writeln!(sink, "iteration,particle,alpha,beta,eta,lambda,score,change_ratio")?;
    let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |v| v.to_string());
    for rec in trace {
        for p in &rec.particles {
            let [a, b, e, l] = p.position;
            writeln!(
                sink,
                "{},{},{a},{b},{e},{l},{},{}",
                rec.iteration,
                p.particle,
                opt(p.score),
                opt(p.change_ratio)
            )?;
        }
        let [a, b, e, l] = rec.gb_position;
        writeln!(sink, "{},gb,{a},{b},{e},{l},{},NA", rec.iteration, rec.gb_score)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn template() -> FactorState {
        FactorState::init(4, 4, 2, 1).unwrap()
    }

    #[test]
    fn default_box_and_caps() {
        let cfg = SwarmConfig::default();
        assert_eq!(cfg.particles, 10);
        assert_eq!(cfg.w, 0.729);
        assert_eq!((cfg.c1, cfg.c2), (2.0, 2.0));
        assert!((cfg.v_max[0] - 0.28).abs() < 1e-15);
        assert!((cfg.v_max[2] - 0.2 * (0.0625 - 0.00390625)).abs() < 1e-15);
        let swarm = init_swarm(&cfg, &template(), 3).unwrap();
        assert_eq!(swarm.particles.len(), 10);
        for p in &swarm.particles {
            assert!(cfg.search.contains(&p.position));
            assert!((0.1..=1.5).contains(&p.position[0]));
            assert_eq!(p.velocity, [0.0; DIMS]);
            assert_eq!(p.best_score, f64::INFINITY);
            assert_eq!(p.model, template());
        }
        assert!(swarm.global_best.is_none());
    }

    #[test]
    fn init_is_seeded() {
        let cfg = SwarmConfig::default();
        let a = init_swarm(&cfg, &template(), 5).unwrap();
        let b = init_swarm(&cfg, &template(), 5).unwrap();
        let pos = |s: &Swarm| s.particles.iter().map(|p| p.position).collect::<Vec<_>>();
        assert_eq!(pos(&a), pos(&b));
    }

    #[test]
    fn needs_two_particles() {
        let cfg = SwarmConfig {
            particles: 1,
            ..Default::default()
        };
        assert!(init_swarm(&cfg, &template(), 0).is_err());
    }

    fn pinned_swarm(position: [f64; DIMS], velocity: [f64; DIMS]) -> Swarm {
        let mut swarm = init_swarm(
            &SwarmConfig {
                particles: 2,
                ..Default::default()
            },
            &template(),
            0,
        )
        .unwrap();
        for p in &mut swarm.particles {
            p.position = position;
            p.best_position = position;
            p.velocity = velocity;
        }
        swarm.global_best = Some(GlobalBest {
            position,
            score: 1.0,
            particle: 0,
        });
        swarm
    }

    #[test]
    fn stationary_at_optimum() {
        let s = [0.8, 0.8, 0.01, 0.05];
        let mut swarm = pinned_swarm(s, [0.0; DIMS]);
        swarm.evolve_step(&mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(swarm.particles[0].position, s);
        assert_eq!(swarm.particles[0].velocity, [0.0; DIMS]);
    }

    #[test]
    fn inertia_only() {
        let s = [0.8, 0.8, 0.01, 0.05];
        let v = [0.1, -0.1, 0.001, -0.001];
        let mut swarm = pinned_swarm(s, v);
        swarm.evolve_step(&mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        for d in 0..DIMS {
            assert!((swarm.particles[1].velocity[d] - 0.729 * v[d]).abs() < 1e-15);
            assert!((swarm.particles[1].position[d] - (s[d] + 0.729 * v[d])).abs() < 1e-15);
        }
    }

    #[test]
    fn velocity_cap() {
        // w · v alone would be 0.9
        let mut swarm = pinned_swarm([0.2, 0.8, 0.01, 0.05], [0.9 / 0.729, 0.0, 0.0, 0.0]);
        swarm.evolve_step(&mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let p = &swarm.particles[0];
        assert!((p.velocity[0] - 0.28).abs() < 1e-15);
        assert!((p.position[0] - 0.48).abs() < 1e-15);
    }

    #[test]
    fn position_clamp_zeroes_velocity() {
        let mut swarm = pinned_swarm([1.45, 0.8, 0.01, 0.05], [0.2, 0.0, 0.0, 0.0]);
        swarm.evolve_step(&mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let p = &swarm.particles[0];
        assert_eq!(p.position[0], 1.5);
        assert_eq!(p.velocity[0], 0.0);
    }

    #[test]
    fn evolve_requires_global_best() {
        let mut swarm = init_swarm(&SwarmConfig::default(), &template(), 0).unwrap();
        assert!(swarm.evolve_step(&mut ChaCha8Rng::seed_from_u64(1)).is_err());
    }

    #[test]
    fn bests_first_evaluation_and_ties() {
        let mut swarm = init_swarm(
            &SwarmConfig {
                particles: 3,
                ..Default::default()
            },
            &template(),
            0,
        )
        .unwrap();
        let up = swarm.update_bests(&[Some(0.9), Some(0.7), Some(0.8)]).unwrap();
        assert_eq!(up.personal_improvements, 3);
        assert_eq!(up.new_global, Some(1));
        assert_eq!(swarm.global_best.unwrap().position, swarm.particles[1].position);

        // equal scores keep the incumbents
        swarm.particles[0].position = [1.0, 1.0, 0.01, 0.01];
        let up = swarm.update_bests(&[Some(0.9), Some(0.7), None]).unwrap();
        assert_eq!(up.personal_improvements, 0);
        assert_eq!(up.new_global, None);
        assert_ne!(swarm.particles[0].best_position, [1.0, 1.0, 0.01, 0.01]);
        assert_eq!(swarm.gb_history, vec![0.7, 0.7]);
    }

    #[test]
    fn global_best_strict_min() {
        let mut swarm = init_swarm(
            &SwarmConfig {
                particles: 2,
                ..Default::default()
            },
            &template(),
            0,
        )
        .unwrap();
        swarm.global_best = Some(GlobalBest {
            position: [1.0; DIMS],
            score: 0.85,
            particle: 0,
        });
        let up = swarm.update_bests(&[Some(0.9), Some(0.8)]).unwrap();
        assert_eq!(up.new_global, Some(1));
        let gb = swarm.global_best.unwrap();
        assert_eq!(gb.score, 0.8);
        assert_eq!(gb.position, swarm.particles[1].position);
    }

    #[test]
    fn fitness_is_validation_rmse() {
        let swarm = init_swarm(&SwarmConfig::default(), &FactorState::from_parts(1, 2, 1, vec![0.0], vec![0.0, 0.0]).unwrap(), 0).unwrap();
        let cfg = BridgeConfig::default();
        let perfect = [RatingTriple::new(0, 0, 0.25)];
        assert_eq!(fitness(&swarm.particles[0], &perfect, &cfg).unwrap(), 0.0);
        let off = [RatingTriple::new(0, 0, 1.25), RatingTriple::new(0, 1, -0.75)];
        assert!((fitness(&swarm.particles[0], &off, &cfg).unwrap() - 1.0).abs() < 1e-15);
        assert!(fitness(&swarm.particles[0], &[], &cfg).is_err());
    }

    #[test]
    fn change_ratio_needs_history() {
        let r = change_ratios(&[Some(1.0), Some(2.0)], &[None, None]);
        assert_eq!(r, vec![None, None]);
        let r = change_ratios(&[Some(0.9), Some(1.8)], &[Some(1.0), Some(2.0)]);
        assert!((r[0].unwrap() - 0.5).abs() < 1e-12);
        assert!((r[1].unwrap() - 1.0).abs() < 1e-12);
        let r = change_ratios(&[Some(0.9), Some(2.0)], &[Some(1.0), Some(2.0)]);
        assert_eq!(r, vec![None, None]);
    }
}
