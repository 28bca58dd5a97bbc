//! Augmented-Lagrangian schedule for the DAG constraint.

use serde::{Deserialize, Serialize};

use crate::error::{DeciError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugLagState {
    pub rho: f64,
    pub alpha: f64,
    pub outer_step: usize,
    /// Penalty recorded at the previous outer step (`P₁`).
    pub last_penalty: Option<f64>,
}

impl Default for AugLagState {
    fn default() -> Self {
        Self {
            rho: 1.0,
            alpha: 0.0,
            outer_step: 0,
            last_penalty: None,
        }
    }
}

impl AugLagState {
    pub fn new() -> Self {
        Self::default()
    }

    /// With `P₁` the previous penalty: if `P₂ < ratio·P₁` then `α ← α + ρP₂`,
    /// otherwise `ρ ← multiplier·ρ` (capped). The first step has no `P₁` and
    /// always takes the `α` branch.
    pub fn update(&self, p2: f64, ratio: f64, multiplier: f64, cap: f64) -> Result<Self> {
        if !(p2 >= 0.0) || !p2.is_finite() {
            return Err(DeciError::InvalidData(format!("penalty must be finite and non-negative, got {p2}")));
        }
        let mut next = *self;
        let progressed = match self.last_penalty {
            Some(p1) => p2 < ratio * p1,
            None => true,
        };
        if progressed {
            next.alpha = (self.alpha + self.rho * p2).min(cap);
        } else {
            next.rho = (self.rho * multiplier).min(cap);
        }
        next.outer_step += 1;
        next.last_penalty = Some(p2);
        Ok(next)
    }

    pub fn at_cap(&self, cap: f64) -> bool {
        self.rho >= cap || self.alpha >= cap
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(p1: f64, rho: f64, alpha: f64) -> AugLagState {
        AugLagState {
            rho,
            alpha,
            outer_step: 3,
            last_penalty: Some(p1),
        }
    }

    #[test]
    fn progress_updates_alpha() {
        let s = state(1.0, 1.0, 0.0).update(0.5, 0.65, 10.0, 1e13).unwrap();
        assert_eq!((s.rho, s.alpha), (1.0, 0.5));
        assert_eq!(s.last_penalty, Some(0.5));
        assert_eq!(s.outer_step, 4);
    }

    #[test]
    fn stall_multiplies_rho() {
        let s = state(1.0, 1.0, 0.0).update(0.9, 0.65, 10.0, 1e13).unwrap();
        assert_eq!((s.rho, s.alpha), (10.0, 0.0));
    }

    #[test]
    fn zero_penalty_keeps_state() {
        let s = state(1.0, 1.0, 0.25).update(0.0, 0.65, 10.0, 1e13).unwrap();
        assert_eq!((s.rho, s.alpha), (1.0, 0.25));
    }

    #[test]
    fn negative_or_nan_penalty_rejected() {
        assert!(AugLagState::new().update(-1e-3, 0.65, 10.0, 1e13).is_err());
        assert!(AugLagState::new().update(f64::NAN, 0.65, 10.0, 1e13).is_err());
    }

    #[test]
    fn rho_stops_at_cap() {
        let mut s = AugLagState::new().update(0.0, 0.65, 10.0, 1e13).unwrap();
        let mut steps = 0;
        while !s.at_cap(1e13) {
            s = s.update(0.0, 0.65, 10.0, 1e13).unwrap();
            steps += 1;
        }
        assert_eq!(steps, 13);
        assert_eq!(s.rho, 1e13);
        assert!(s.at_cap(1e13));
    }

    #[test]
    fn update_is_pure() {
        let s = state(0.3, 100.0, 2.0);
        assert_eq!(s.update(0.1, 0.65, 10.0, 1e13).unwrap(), s.update(0.1, 0.65, 10.0, 1e13).unwrap());
    }
}
