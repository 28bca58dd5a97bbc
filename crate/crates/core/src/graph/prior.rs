use deci_numerics::Var;
use ndarray::Array2;

use crate::error::{DeciError, Result};
use crate::graph::penalty::{dag_penalty, dag_penalty_var};

/// Unnormalized graph prior
/// `−λ_s · strength · ‖G − W₀‖² − ρ h(G)² − α h(G)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphPrior {
    pub lambda_s: f64,
    pub rho: f64,
    pub alpha: f64,
    /// Prior mean; `None` is the zero matrix.
    pub w0: Option<Array2<f64>>,
    pub strength: f64,
}

impl Default for GraphPrior {
    fn default() -> Self {
        Self {
            lambda_s: 5.0,
            rho: 1.0,
            alpha: 0.0,
            w0: None,
            strength: 1.0,
        }
    }
}

impl GraphPrior {
    pub fn new(lambda_s: f64, rho: f64, alpha: f64) -> Self {
        Self {
            lambda_s,
            rho,
            alpha,
            ..Self::default()
        }
    }

    pub fn with_prior_mean(mut self, w0: Array2<f64>, strength: f64) -> Result<Self> {
        if w0.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(DeciError::InvalidData("prior mean entries must lie in [0, 1]".into()));
        }
        self.w0 = Some(w0);
        self.strength = strength;
        Ok(self)
    }

    fn check(&self, g: &Array2<f64>) -> Result<()> {
        if let Some(w0) = &self.w0 {
            if w0.dim() != g.dim() {
                return Err(DeciError::ShapeMismatch(format!(
                    "prior mean {:?} vs graph {:?}",
                    w0.dim(),
                    g.dim()
                )));
            }
        }
        Ok(())
    }

    pub fn log_density(&self, g: &Array2<f64>) -> Result<f64> {
        self.check(g)?;
        let h = dag_penalty(g)?;
        let dist = match &self.w0 {
            Some(w0) => (g - w0).mapv(|v| v * v).sum(),
            None => g.mapv(|v| v * v).sum(),
        };
        Ok(-self.lambda_s * self.strength * dist - self.rho * h * h - self.alpha * h)
    }

    pub fn log_density_var<'t>(&self, g: Var<'t>) -> Result<Var<'t>> {
        let gv = g.value();
        self.check(&gv)?;
        let tape = g.tape();
        let diff = match &self.w0 {
            Some(w0) => g - tape.constant(w0.clone()),
            None => g,
        };
        let h = dag_penalty_var(g)?;
        let sparsity = diff.square().sum().scale(-self.lambda_s * self.strength);
        Ok(sparsity - h.square().scale(self.rho) - h.scale(self.alpha))
    }
}
