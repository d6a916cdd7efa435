//! α-β-divergence loss, its gradient factor, and the regularised objective.
//!
//! Per observed entry `r` with estimate `r̂` the divergence is
//!
//! ```text
//! D(r, r̂) = -1/(αβ) · ( r^α r̂^β − α/(α+β) r^(α+β) − β/(α+β) r̂^(α+β) )
//! ```
//!
//! which reduces to `½ (r − r̂)²` at `α = β = 1`. The objective adds
//! `λ/2 (‖p_u‖² + ‖q_i‖²)` once per training instance.
//!
//! The closed form above cancels catastrophically when `r̂ ≈ r`. It is
//! evaluated here through `t = r̂ / r`, `l = ln t`:
//!
//! ```text
//! D = r^(α+β) / α · l² · ( (α+β) E((α+β) l) − β E(β l) ),   E(x) = (eˣ − 1 − x) / x²
//! ```
//!
//! with `l` taken from `ln_1p((r̂ − r) / r)` near `r̂ = r` (a plain log
//! difference elsewhere) and `E` from its Taylor series
//! near zero, so the result is exactly `0` at `r̂ = r` and keeps full relative
//! precision as the residual shrinks.

use crate::data::RatingTriple;
use crate::model::FactorState;
use crate::{BridgeConfig, Error, Result};

/// Lower clamp applied to `r̂` before divergence and gradient evaluation.
/// Avoids `r̂^(β−1)` blowing up when β < 1 and every bridged factor is zero.
pub const PREDICTION_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivergenceParams {
    alpha: f64,
    beta: f64,
}

impl DivergenceParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite() && beta > 0.0 && beta.is_finite()) {
            return Err(Error::Domain(format!(
                "divergence parameters must be positive and finite, got α={alpha}, β={beta}"
            )));
        }
        Ok(Self { alpha, beta })
    }

    /// The Euclidean configuration α = β = 1.
    pub fn euclidean() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Divergence term for one entry, no input validation.
    #[inline]
    pub fn loss(&self, r: f64, r_hat: f64) -> f64 {
        let (a, b) = (self.alpha, self.beta);
        let l = log_ratio(r, r_hat);
        let ab = a + b;
        let bracket = ab * excess_exp(ab * l) - b * excess_exp(b * l);
        r.powf(ab) / a * (l * l) * bracket
    }

    /// `δ = (r^α − r̂^α) r̂^(β−1) / α`, the negative derivative of
    /// [`loss`](Self::loss) with respect to `r̂`. No input validation.
    #[inline]
    pub fn grad_factor(&self, r: f64, r_hat: f64) -> f64 {
        let (a, b) = (self.alpha, self.beta);
        let l = log_ratio(r, r_hat);
        // r^α − r̂^α = −r^α (e^(α l) − 1)
        -(r.powf(a) / a) * (a * l).exp_m1() * r_hat.powf(b - 1.0)
    }
}

#[inline]
fn log_ratio(r: f64, r_hat: f64) -> f64 {
    let d = (r_hat - r) / r;
    if d.abs() < 0.5 {
        d.ln_1p()
    } else {
        // d rounds to -1 once r̂/r drops below ε
        r_hat.ln() - r.ln()
    }
}

/// `E(x) = (eˣ − 1 − x) / x²`, with `E(0) = ½`.
#[inline]
fn excess_exp(x: f64) -> f64 {
    if x.abs() < 0.5 {
        // Σ_{n≥0} xⁿ / (n+2)!
        let mut term = 0.5;
        let mut sum = 0.5;
        for n in 1..22 {
            term *= x / (n as f64 + 2.0);
            sum += term;
        }
        sum
    } else {
        (x.exp_m1() - x) / (x * x)
    }
}

fn check_entry(r: f64, r_hat: f64) -> Result<()> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::Domain(format!("observed value must be positive, got {r}")));
    }
    if !(r_hat > 0.0 && r_hat.is_finite()) {
        return Err(Error::Domain(format!("estimate must be positive, got {r_hat}")));
    }
    Ok(())
}

/// Divergence term of one entry (no regularisation). Non-negative, zero iff
/// `r_hat == r`.
pub fn entry_loss(r: f64, r_hat: f64, p: &DivergenceParams) -> Result<f64> {
    check_entry(r, r_hat)?;
    Ok(p.loss(r, r_hat))
}

pub fn entry_grad_factor(r: f64, r_hat: f64, p: &DivergenceParams) -> Result<f64> {
    check_entry(r, r_hat)?;
    Ok(p.grad_factor(r, r_hat))
}

/// Regularised training objective over `train`, summed sequentially in slice
/// order.
pub fn objective(
    state: &FactorState,
    train: &[RatingTriple],
    p: &DivergenceParams,
    lambda: f64,
    cfg: &BridgeConfig,
) -> Result<f64> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Domain(format!(
            "regularisation must be non-negative, got {lambda}"
        )));
    }
    let f = state.rank();
    let mut p_row = vec![0.0; f];
    let mut q_row = vec![0.0; f];
    let mut total = 0.0;
    for t in train {
        state.bridged_row(t.row, cfg, &mut p_row)?;
        state.bridged_col(t.col, cfg, &mut q_row)?;
        let r_hat = dot(&p_row, &q_row).max(PREDICTION_FLOOR);
        let norms = dot(&p_row, &p_row) + dot(&q_row, &q_row);
        total += entry_loss(t.value, r_hat, p)? + 0.5 * lambda * norms;
    }
    Ok(total)
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
