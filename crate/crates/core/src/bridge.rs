//! Thresholded-sigmoid bridge between unconstrained optimisation variables
//! and non-negative latent factors.
//!
//! `g(z) = φ(z)` when `φ(z) ≥ ι`, otherwise exactly `0`, with
//! `φ(z) = 1 / (1 + e^(-z))`. Its derivative is `φ(z)(1 - φ(z))` on the active
//! branch and `0` in the dead zone. Both are decided by the same comparison on
//! `φ(z)`, so a factor that bridges to zero always has a zero gradient.
//!
//! Once a variable falls into the dead zone its gradient is zero and SGD can
//! no longer move it; no recovery mechanism is applied.

use crate::{Error, Result};

pub const DEFAULT_IOTA: f64 = 5e-5;

/// Largest `f64` strictly below one. `φ(z)` rounds to `1.0` for `z > ~36.7`;
/// the bridge output is capped here so factors stay in `[ι, 1)`.
const BELOW_ONE: f64 = 1.0 - f64::EPSILON / 2.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BridgeConfig {
    iota: f64,
}

impl BridgeConfig {
    pub fn new(iota: f64) -> Result<Self> {
        if !(iota > 0.0 && iota < 0.5) {
            return Err(Error::InvalidArgument(format!(
                "bridge threshold must lie in (0, 0.5), got {iota}"
            )));
        }
        Ok(Self { iota })
    }

    pub fn iota(&self) -> f64 {
        self.iota
    }

    /// The `z` at which `φ(z) = ι`, i.e. `ln(ι / (1 - ι))`. Informational;
    /// branch decisions are always made on `φ(z)`.
    pub fn z_cutoff(&self) -> f64 {
        (self.iota / (1.0 - self.iota)).ln()
    }

    /// Bridge value without the finiteness check.
    #[inline]
    pub fn value(&self, z: f64) -> f64 {
        let phi = logistic(z);
        if phi >= self.iota {
            phi.min(BELOW_ONE)
        } else {
            0.0
        }
    }

    /// Bridge value and derivative from one logistic evaluation.
    #[inline]
    pub fn value_and_grad(&self, z: f64) -> (f64, f64) {
        let phi = logistic(z);
        if phi >= self.iota {
            (phi.min(BELOW_ONE), phi * (1.0 - phi))
        } else {
            (0.0, 0.0)
        }
    }

    /// True when `v` is a legal bridge output: `0` or in `[ι, 1)`.
    #[inline]
    pub fn is_admissible(&self, v: f64) -> bool {
        v == 0.0 || (v >= self.iota && v < 1.0)
    }
}

impl Default for BridgeConfig {
    fn default() -> Self {
        Self { iota: DEFAULT_IOTA }
    }
}

#[inline]
fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn check_finite(z: f64) -> Result<()> {
    if z.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("bridge input must be finite, got {z}")))
    }
}

pub fn bridge(z: f64, cfg: &BridgeConfig) -> Result<f64> {
    check_finite(z)?;
    Ok(cfg.value(z))
}

pub fn bridge_grad(z: f64, cfg: &BridgeConfig) -> Result<f64> {
    check_finite(z)?;
    Ok(cfg.value_and_grad(z).1)
}
