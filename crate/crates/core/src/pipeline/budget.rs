//! Coherence budget: the quartic term needs `t* ≈ α/ω0` to act, so the
//! decoherence rate must satisfy `Γ t* ≪ 1`.

use serde::Serialize;

use crate::error::{Error, Result};

/// `Γ t*` below this value counts as satisfied.
pub const BUDGET_THRESHOLD: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CoherenceBudget {
    pub alpha: f64,
    /// `Γ/ω0`.
    pub gamma: f64,
    /// `t* ω0 = α`.
    pub t_star: f64,
    pub ratio: f64,
    pub satisfied: bool,
}

impl CoherenceBudget {
    pub fn new(alpha: f64, gamma: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Domain(format!("alpha must be positive, got {alpha}")));
        }
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(Error::Domain(format!("gamma must be >= 0, got {gamma}")));
        }
        let ratio = gamma * alpha;
        Ok(Self { alpha, gamma, t_star: alpha, ratio, satisfied: ratio < BUDGET_THRESHOLD })
    }

    pub fn verdict(&self) -> &'static str {
        if self.satisfied {
            "satisfied"
        } else {
            "violated"
        }
    }
}
