//! Random-Fourier-feature ridge regression for conditional means.
//!
//! `φ(c) = √(2/M) cos(ω c + b)` with `ω ~ N(0, ℓ⁻² I)` and `b ~ U(0, 2π)`
//! approximates an RBF kernel of lengthscale `ℓ`. Weights solve a centered
//! ridge problem with an unpenalized intercept.

use deci_numerics::RngStream;
use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, Axis};

use crate::error::{DeciError, Result};

pub const DEFAULT_FEATURES: usize = 3000;
pub const DEFAULT_LENGTHSCALE: f64 = 1.0;
/// Ridge coefficient per feature.
pub const DEFAULT_RIDGE_SCALE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct RffFeatures {
    /// `p × M` frequencies.
    pub omega: Array2<f64>,
    pub phase: Array1<f64>,
}

impl RffFeatures {
    pub fn draw(input_dim: usize, n_features: usize, lengthscale: f64, rng: &mut RngStream) -> Self {
        let omega = Array2::from_shape_fn((input_dim, n_features), |_| rng.normal() / lengthscale);
        let phase = Array1::from_shape_fn(n_features, |_| rng.uniform_range(0.0, 2.0 * std::f64::consts::PI));
        Self { omega, phase }
    }

    pub fn n_features(&self) -> usize {
        self.phase.len()
    }

    pub fn transform(&self, x: &Array2<f64>) -> Array2<f64> {
        let scale = (2.0 / self.n_features() as f64).sqrt();
        let mut f = x.dot(&self.omega);
        f += &self.phase;
        f.mapv_inplace(|v| scale * v.cos());
        f
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RffSurrogate {
    pub features: RffFeatures,
    /// `M × k` weights on centered features.
    pub weights: Array2<f64>,
    pub feature_mean: Array1<f64>,
    pub target_mean: Array1<f64>,
    pub ridge: f64,
}

impl RffSurrogate {
    pub fn predict(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut phi = self.features.transform(x);
        phi -= &self.feature_mean;
        let mut out = phi.dot(&self.weights);
        out += &self.target_mean;
        out
    }

    pub fn predict_one(&self, c: &[f64]) -> Vec<f64> {
        let x = Array2::from_shape_vec((1, c.len()), c.to_vec()).expect("row");
        self.predict(&x).row(0).to_vec()
    }
}

/// Fits one surrogate per target matrix, all sharing `features` and a single
/// factorization of the ridge system.
pub fn fit_shared(features: &RffFeatures, x: &Array2<f64>, targets: &[&Array2<f64>], ridge_scale: f64) -> Result<Vec<RffSurrogate>> {
    let n = x.nrows();
    if n == 0 {
        return Err(DeciError::InvalidData("no samples for surrogate fit".into()));
    }
    if x.ncols() != features.omega.nrows() {
        return Err(DeciError::ShapeMismatch(format!(
            "{} conditioning columns, features expect {}",
            x.ncols(),
            features.omega.nrows()
        )));
    }
    for y in targets {
        if y.nrows() != n {
            return Err(DeciError::ShapeMismatch("target rows differ from inputs".into()));
        }
    }
    let m = features.n_features();
    let ridge = ridge_scale * m as f64;
    let mut phi = features.transform(x);
    let feature_mean = phi.mean_axis(Axis(0)).expect("non-empty");
    phi -= &feature_mean;
    let mut gram = phi.t().dot(&phi);
    for i in 0..m {
        gram[[i, i]] += ridge;
    }
    let chol = DMatrix::from_row_slice(m, m, gram.as_slice().expect("standard layout"))
        .cholesky()
        .ok_or_else(|| DeciError::InvalidData("surrogate ridge system is not positive definite".into()))?;
    let mut out = Vec::with_capacity(targets.len());
    for y in targets {
        let target_mean = y.mean_axis(Axis(0)).expect("non-empty");
        let yc = *y - &target_mean;
        let rhs = phi.t().dot(&yc);
        let k = rhs.ncols();
        let mut weights = Array2::zeros((m, k));
        for j in 0..k {
            let sol = chol.solve(&DVector::from_iterator(m, rhs.column(j).iter().copied()));
            for i in 0..m {
                weights[[i, j]] = sol[i];
            }
        }
        out.push(RffSurrogate {
            features: features.clone(),
            weights,
            feature_mean: feature_mean.clone(),
            target_mean,
            ridge,
        });
    }
    Ok(out)
}

/// Draws features and fits a single surrogate of `y` on `x`.
pub fn fit_rff_surrogate(
    x: &Array2<f64>,
    y: &Array2<f64>,
    n_features: usize,
    lengthscale: f64,
    ridge_scale: f64,
    rng: &mut RngStream,
) -> Result<RffSurrogate> {
    let features = RffFeatures::draw(x.ncols(), n_features, lengthscale, rng);
    Ok(fit_shared(&features, x, &[y], ridge_scale)?.remove(0))
}
