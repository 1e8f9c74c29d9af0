use serde::{Deserialize, Serialize};

use crate::error::{CcmError, Result};

/// Scalars of the quasi-affine work model.
///
/// `alpha` switches the compute term on or off; `beta`, `gamma` and `delta`
/// convert off-rank volume, on-rank volume and homing bytes to seconds.
/// When `enforce_memory` is set, a rank exceeding its memory share has
/// infinite work.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkCoefficients {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub enforce_memory: bool,
}

impl WorkCoefficients {
    pub fn new(alpha: f64, beta: f64, gamma: f64, delta: f64, enforce_memory: bool) -> Result<Self> {
        let c = WorkCoefficients {
            alpha,
            beta,
            gamma,
            delta,
            enforce_memory,
        };
        c.validate()?;
        Ok(c)
    }

    /// Load only, memory constraint enforced.
    pub fn compute_only() -> Self {
        WorkCoefficients {
            alpha: 1.0,
            beta: 0.0,
            gamma: 0.0,
            delta: 0.0,
            enforce_memory: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.alpha != 0.0 && self.alpha != 1.0 {
            return Err(CcmError::Config(format!("alpha must be 0 or 1, got {}", self.alpha)));
        }
        for (name, v) in [("beta", self.beta), ("gamma", self.gamma), ("delta", self.delta)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(CcmError::Config(format!(
                    "{name} must be a finite non-negative number, got {v}"
                )));
            }
        }
        Ok(())
    }

    pub fn is_compute_only(&self) -> bool {
        self.alpha == 1.0 && self.beta == 0.0 && self.gamma == 0.0 && self.delta == 0.0
    }
}

impl Default for WorkCoefficients {
    fn default() -> Self {
        WorkCoefficients {
            alpha: 1.0,
            beta: 0.0,
            gamma: 0.0,
            delta: 0.0,
            enforce_memory: false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_is_binary() {
        assert!(WorkCoefficients::new(0.5, 0.0, 0.0, 0.0, false).is_err());
        assert!(WorkCoefficients::new(0.0, 0.0, 0.0, 0.0, false).is_ok());
        assert!(WorkCoefficients::new(1.0, -1e-9, 0.0, 0.0, false).is_err());
        assert!(WorkCoefficients::new(1.0, 0.0, f64::NAN, 0.0, false).is_err());
        assert!(WorkCoefficients::compute_only().is_compute_only());
    }
}
