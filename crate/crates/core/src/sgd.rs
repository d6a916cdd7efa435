//! Per-instance SGD over the training set and the manually tuned training loop.

use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;

use crate::data::{HdiDataset, RatingTriple};
use crate::divergence::{dot, DivergenceParams, PREDICTION_FLOOR};
use crate::eval::rmse_scaled;
use crate::model::FactorState;
use crate::seed;
use crate::{BridgeConfig, Error, Result};

/// One point `(α, β, η, λ)` of the hyper-parameter space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparams {
    pub alpha: f64,
    pub beta: f64,
    pub eta: f64,
    pub lambda: f64,
}

impl Hyperparams {
    pub fn new(alpha: f64, beta: f64, eta: f64, lambda: f64) -> Result<Self> {
        let hp = Self {
            alpha,
            beta,
            eta,
            lambda,
        };
        hp.validate()?;
        Ok(hp)
    }

    pub fn validate(&self) -> Result<()> {
        DivergenceParams::new(self.alpha, self.beta)?;
        // η = 0 is accepted as a no-op step
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::Domain(format!(
                "learning rate must be non-negative, got {}",
                self.eta
            )));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Domain(format!(
                "regularisation must be non-negative, got {}",
                self.lambda
            )));
        }
        Ok(())
    }

    pub fn divergence(&self) -> Result<DivergenceParams> {
        DivergenceParams::new(self.alpha, self.beta)
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.alpha, self.beta, self.eta, self.lambda]
    }

    pub fn from_array(v: [f64; 4]) -> Self {
        Self {
            alpha: v[0],
            beta: v[1],
            eta: v[2],
            lambda: v[3],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochReport {
    /// Mean divergence term, each measured just before its entry's update.
    pub mean_loss: f64,
    pub updates: usize,
    /// Largest |x| or |y| after the epoch.
    pub max_abs_variable: f64,
}

/// One pass over `train` in a seeded random order.
///
/// For each entry both factor rows are updated simultaneously from the
/// pre-update snapshot `p_u = g(x_u)`, `q_i = g(y_i)`:
///
/// ```text
/// δ      = (r^α − r̂^α) r̂^(β−1) / α,      r̂ = max(p_u·q_i, 1e-8)
/// x_u,k += η (δ q_i,k − λ p_u,k) g'(x_u,k)
/// y_i,k += η (δ p_u,k − λ q_i,k) g'(y_i,k)
/// ```
///
/// Any non-finite quantity aborts the epoch before the offending entry is
/// written, leaving the state as it was after the previous entry.
pub fn sgd_epoch(
    state: &mut FactorState,
    train: &[RatingTriple],
    hp: &Hyperparams,
    cfg: &BridgeConfig,
    rng_seed: u64,
) -> Result<EpochReport> {
    hp.validate()?;
    let div = hp.divergence()?;
    for t in train {
        if t.row >= state.n_rows() || t.col >= state.n_cols() {
            return Err(Error::OutOfBounds {
                what: "entry",
                index: t.row.max(t.col),
                len: state.n_rows().min(state.n_cols()),
            });
        }
        if !(t.value > 0.0) {
            return Err(Error::Domain(format!(
                "training values must be positive, got {} at ({}, {})",
                t.value, t.row, t.col
            )));
        }
    }

    let f = state.rank();
    let (eta, lambda) = (hp.eta, hp.lambda);
    let mut p = vec![0.0; f];
    let mut gp = vec![0.0; f];
    let mut q = vec![0.0; f];
    let mut gq = vec![0.0; f];
    let mut nx = vec![0.0; f];
    let mut ny = vec![0.0; f];

    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(&mut seed::rng(rng_seed));

    let mut loss_sum = 0.0;
    for &idx in &order {
        let t = train[idx];
        let (xu, yi) = state.rows_mut(t.row, t.col);
        for k in 0..f {
            (p[k], gp[k]) = cfg.value_and_grad(xu[k]);
            (q[k], gq[k]) = cfg.value_and_grad(yi[k]);
        }
        let r_hat = dot(&p, &q).max(PREDICTION_FLOOR);
        let loss = div.loss(t.value, r_hat);
        let delta = div.grad_factor(t.value, r_hat);
        let mut finite = loss.is_finite() && delta.is_finite();
        for k in 0..f {
            nx[k] = xu[k] + eta * (delta * q[k] - lambda * p[k]) * gp[k];
            ny[k] = yi[k] + eta * (delta * p[k] - lambda * q[k]) * gq[k];
            finite &= nx[k].is_finite() && ny[k].is_finite();
        }
        if !finite {
            return Err(Error::NumericAbort {
                entry: idx,
                row: t.row,
                col: t.col,
                detail: format!(
                    "r={:e} r_hat={r_hat:e} delta={delta:e} loss={loss:e} under {hp:?}",
                    t.value
                ),
            });
        }
        xu.copy_from_slice(&nx);
        yi.copy_from_slice(&ny);
        loss_sum += loss;
    }

    let max_abs_variable = state
        .x()
        .iter()
        .chain(state.y())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(EpochReport {
        mean_loss: if train.is_empty() {
            0.0
        } else {
            loss_sum / train.len() as f64
        },
        updates: train.len(),
        max_abs_variable,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOptions {
    pub max_epochs: usize,
    /// Stop once the validation RMSE moves by less than `tol` for
    /// `patience` consecutive epochs.
    pub tol: f64,
    pub patience: usize,
    pub seed: u64,
    /// Scan every derived factor after each epoch and record violations of
    /// the `{0} ∪ [ι, 1)` range in the trace.
    pub audit: bool,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            max_epochs: 1000,
            tol: 1e-5,
            patience: 2,
            seed: 0,
            audit: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_train_loss: f64,
    pub validation_rmse: f64,
    pub seconds: f64,
    pub audit_violations: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct ManualRun {
    /// State at the lowest validation RMSE seen, the initial state included.
    pub state: FactorState,
    /// 0 when no epoch improved on the initial state.
    pub best_epoch: usize,
    pub best_validation_rmse: f64,
    pub epochs_run: usize,
    pub trace: Vec<EpochRecord>,
    pub total_seconds: f64,
}

/// Trains one model with fixed hyper-parameters until the validation RMSE
/// settles or `max_epochs` is reached.
pub fn train_manual(
    dataset: &HdiDataset,
    init: FactorState,
    hp: &Hyperparams,
    cfg: &BridgeConfig,
    opts: &TrainOptions,
) -> Result<ManualRun> {
    hp.validate()?;
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
    let mut state = init;
    let mut prev_rmse = rmse_scaled(&state, dataset.validation(), cfg)?;
    let mut best_rmse = prev_rmse;
    let mut best_state = state.clone();
    let mut best_epoch = 0;
    let mut stalled = 0;
    let mut trace = Vec::new();

    for epoch in 1..=opts.max_epochs {
        let t0 = Instant::now();
        let epoch_seed = seed::derive(opts.seed, &[seed::tag::MANUAL_EPOCH, epoch as u64]);
        let report = sgd_epoch(&mut state, dataset.train(), hp, cfg, epoch_seed)?;
        let rmse = rmse_scaled(&state, dataset.validation(), cfg)?;
        let audit_violations = opts.audit.then(|| state.audit(cfg));
        trace.push(EpochRecord {
            epoch,
            mean_train_loss: report.mean_loss,
            validation_rmse: rmse,
            seconds: t0.elapsed().as_secs_f64(),
            audit_violations,
        });
        log::debug!("epoch {epoch}: loss {:.6} validation rmse {rmse:.6}", report.mean_loss);

        if rmse < best_rmse {
            best_rmse = rmse;
            best_state.clone_from(&state);
            best_epoch = epoch;
        }
        if (rmse - prev_rmse).abs() < opts.tol {
            stalled += 1;
        } else {
            stalled = 0;
        }
        prev_rmse = rmse;
        if stalled >= opts.patience {
            break;
        }
    }

    Ok(ManualRun {
        state: best_state,
        best_epoch,
        best_validation_rmse: best_rmse,
        epochs_run: trace.len(),
        trace,
        total_seconds: started.elapsed().as_secs_f64(),
    })
}

/// Writes `epoch,mean_train_loss,validation_rmse,seconds` records.
pub fn write_trace<W: Write>(trace: &[EpochRecord], mut sink: W) -> Result<()> {
    writeln!(sink, "epoch,mean_train_loss,validation_rmse,seconds")?;
    for r in trace {
        writeln!(
            sink,
            "{},{},{},{}",
            r.epoch, r.mean_train_loss, r.validation_rmse, r.seconds
        )?;
    }
    Ok(())
}
