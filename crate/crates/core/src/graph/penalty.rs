//! Acyclicity penalty `h(W) = tr(exp(W ∘ W)) − D`.

use deci_numerics::{CustomOp, Var};
use ndarray::Array2;

use crate::error::{DeciError, Result};

/// Matrix exponential by scaling and squaring with a Taylor core. The series
/// is summed until terms stop contributing at double precision.
pub fn expm(a: &Array2<f64>) -> Array2<f64> {
    let n = a.nrows();
    let norm1 = (0..n)
        .map(|c| a.column(c).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let mut squarings = 0;
    if norm1 > 0.5 {
        squarings = (norm1 / 0.5).log2().ceil() as i32;
    }
    let b = a / 2f64.powi(squarings);
    let mut sum = Array2::eye(n);
    let mut term = Array2::eye(n);
    for k in 1..60 {
        term = term.dot(&b) / k as f64;
        sum += &term;
        let tmax = term.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if tmax <= f64::EPSILON * 1e-3 {
            break;
        }
    }
    for _ in 0..squarings {
        sum = sum.dot(&sum);
    }
    sum
}

fn check_square(w: &Array2<f64>) -> Result<()> {
    if w.nrows() != w.ncols() {
        return Err(DeciError::ShapeMismatch(format!(
            "penalty needs a square matrix, got {}x{}",
            w.nrows(),
            w.ncols()
        )));
    }
    Ok(())
}

pub fn dag_penalty(w: &Array2<f64>) -> Result<f64> {
    check_square(w)?;
    let e = expm(&(w * w));
    Ok(e.diag().sum() - w.nrows() as f64)
}

struct DagPenaltyOp {
    expm: Array2<f64>,
}

impl CustomOp for DagPenaltyOp {
    fn name(&self) -> &'static str {
        "dag_penalty"
    }

    fn backward(&self, inputs: &[&Array2<f64>], _output: &Array2<f64>, grad: &Array2<f64>) -> Vec<Option<Array2<f64>>> {
        let g = grad[[0, 0]];
        let w = inputs[0];
        let gw = w * &self.expm.t() * (2.0 * g);
        vec![Some(gw)]
    }
}

/// Differentiable penalty; gradient `2 W ∘ exp(W ∘ W)ᵀ`.
pub fn dag_penalty_var<'t>(w: Var<'t>) -> Result<Var<'t>> {
    let wv = w.value();
    check_square(&wv)?;
    let e = expm(&(&*wv * &*wv));
    let h = e.diag().sum() - wv.nrows() as f64;
    let op = DagPenaltyOp { expm: e };
    Ok(w.tape().custom(&[w], Array2::from_elem((1, 1), h), Box::new(op)))
}
