//! RMSE evaluation and manual (α, β) grid sweeps.

use std::io::Write;

use rayon::prelude::*;

use crate::data::{HdiDataset, RatingTriple, ScalingMeta};
use crate::model::FactorState;
use crate::sgd::{train_manual, Hyperparams, TrainOptions};
use crate::{BridgeConfig, Error, Result};

/// RMSE of unclamped predictions over `set`. With `raw_space` both the
/// prediction and the target are mapped back through `scaling` first.
pub fn rmse(
    state: &FactorState,
    set: &[RatingTriple],
    cfg: &BridgeConfig,
    scaling: &ScalingMeta,
    raw_space: bool,
) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::EmptyInput("rmse over an empty set"));
    }
    let mut sum = 0.0;
    for t in set {
        let mut pred = state.predict(t.row, t.col, cfg)?;
        let mut target = t.value;
        if raw_space {
            pred = scaling.to_raw(pred);
            target = scaling.to_raw(target);
        }
        let d = target - pred;
        sum += d * d;
    }
    Ok((sum / set.len() as f64).sqrt())
}

/// RMSE on the training scale.
pub fn rmse_scaled(state: &FactorState, set: &[RatingTriple], cfg: &BridgeConfig) -> Result<f64> {
    rmse(state, set, cfg, &ScalingMeta::IDENTITY, false)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub rmse: f64,
    pub n: usize,
}

pub fn evaluate(
    state: &FactorState,
    set: &[RatingTriple],
    cfg: &BridgeConfig,
    scaling: &ScalingMeta,
) -> Result<EvalReport> {
    Ok(EvalReport {
        rmse: rmse(state, set, cfg, scaling, true)?,
        n: set.len(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum CellOutcome {
    Trained {
        test_rmse: f64,
        epochs: usize,
        best_epoch: usize,
        seconds: f64,
        /// Range violations summed over all epochs; `None` unless audited.
        audit_violations: Option<usize>,
    },
    Failed(String),
}

impl CellOutcome {
    pub fn test_rmse(&self) -> Option<f64> {
        match self {
            CellOutcome::Trained { test_rmse, .. } => Some(*test_rmse),
            CellOutcome::Failed(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    /// `cells[a][b]` for `alphas[a]`, `betas[b]`.
    pub cells: Vec<Vec<CellOutcome>>,
}

impl SweepResult {
    /// Grid coordinates and RMSE of the lowest test RMSE; ties keep the
    /// first cell in row-major order.
    pub fn best(&self) -> Option<(usize, usize, f64)> {
        let mut best: Option<(usize, usize, f64)> = None;
        for (a, row) in self.cells.iter().enumerate() {
            for (b, cell) in row.iter().enumerate() {
                if let Some(v) = cell.test_rmse() {
                    if best.is_none_or(|(_, _, bv)| v < bv) {
                        best = Some((a, b, v));
                    }
                }
            }
        }
        best
    }

    /// Test RMSE of the Euclidean cell α = β = 1, when it is on the grid.
    pub fn euclidean_rmse(&self) -> Option<f64> {
        let a = self.alphas.iter().position(|&v| v == 1.0)?;
        let b = self.betas.iter().position(|&v| v == 1.0)?;
        self.cells[a][b].test_rmse()
    }

    /// `(RMSE(1,1) − RMSE_best) / RMSE(1,1)`.
    pub fn euclidean_gap(&self) -> Option<f64> {
        let reference = self.euclidean_rmse()?;
        let (_, _, best) = self.best()?;
        Some((reference - best) / reference)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SweepOptions {
    pub eta: f64,
    pub lambda: f64,
    pub train: TrainOptions,
    /// Worker threads for independent cells; 0 uses all cores.
    pub threads: usize,
}

/// Trains one manual model per (α, β) cell from the same initial factors and
/// seed, and scores each on the test set. A failing cell is recorded and the
/// sweep continues.
pub fn grid_sweep(
    dataset: &HdiDataset,
    alphas: &[f64],
    betas: &[f64],
    init: &FactorState,
    cfg: &BridgeConfig,
    opts: &SweepOptions,
) -> Result<SweepResult> {
    if alphas.is_empty() || betas.is_empty() {
        return Err(Error::InvalidArgument("sweep grids must be non-empty".into()));
    }
    if let Some(v) = alphas.iter().chain(betas).find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidArgument(format!("grid values must be positive, got {v}")));
    }
    if dataset.test().is_empty() {
        return Err(Error::EmptyInput("sweep needs a non-empty test set"));
    }
    let coords: Vec<(usize, usize)> = (0..alphas.len())
        .flat_map(|a| (0..betas.len()).map(move |b| (a, b)))
        .collect();

    let run_cell = |&(a, b): &(usize, usize)| -> CellOutcome {
        let outcome = Hyperparams::new(alphas[a], betas[b], opts.eta, opts.lambda)
            .and_then(|hp| train_manual(dataset, init.clone(), &hp, cfg, &opts.train))
            .and_then(|run| {
                let test_rmse = rmse(&run.state, dataset.test(), cfg, &dataset.scaling(), true)?;
                let audit_violations = opts
                    .train
                    .audit
                    .then(|| run.trace.iter().filter_map(|r| r.audit_violations).sum());
                Ok(CellOutcome::Trained {
                    test_rmse,
                    epochs: run.epochs_run,
                    best_epoch: run.best_epoch,
                    seconds: run.total_seconds,
                    audit_violations,
                })
            });
        outcome.unwrap_or_else(|e| {
            log::warn!("sweep cell α={} β={} failed: {e}", alphas[a], betas[b]);
            CellOutcome::Failed(e.to_string())
        })
    };

    let flat: Vec<CellOutcome> = if opts.threads == 1 {
        coords.iter().map(run_cell).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.threads)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
        pool.install(|| coords.par_iter().map(run_cell).collect())
    };

    let mut it = flat.into_iter();
    let cells = (0..alphas.len())
        .map(|_| it.by_ref().take(betas.len()).collect())
        .collect();
    Ok(SweepResult {
        alphas: alphas.to_vec(),
        betas: betas.to_vec(),
        cells,
    })
}

/// Writes the RMSE matrix with α down the rows and β across the columns,
/// followed by a `# best ...` summary line. Failed cells print as `failed`.
pub fn write_sweep<W: Write>(result: &SweepResult, delimiter: char, mut sink: W) -> Result<()> {
    write!(sink, "alpha\\beta")?;
    for b in &result.betas {
        write!(sink, "{delimiter}{b}")?;
    }
    writeln!(sink)?;
    for (a, row) in result.alphas.iter().zip(&result.cells) {
        write!(sink, "{a}")?;
        for cell in row {
            match cell.test_rmse() {
                Some(v) => write!(sink, "{delimiter}{v}")?,
                None => write!(sink, "{delimiter}failed")?,
            }
        }
        writeln!(sink)?;
    }
    match result.best() {
        Some((a, b, v)) => {
            write!(
                sink,
                "# best alpha={} beta={} rmse={v}",
                result.alphas[a], result.betas[b]
            )?;
            match result.euclidean_gap() {
                Some(gap) => writeln!(sink, " gap_vs_euclidean={:.4}%", gap * 100.0)?,
                None => writeln!(sink, " gap_vs_euclidean=n/a")?,
            }
        }
        None => writeln!(sink, "# best none (all cells failed)")?,
    }
    Ok(())
}
