//! Central finite-difference gradient checks.
//!
//! Used by the test suites of this crate and its dependents; kept in the public
//! API so downstream crates can check their own custom operations.

use ndarray::Array2;

use crate::tape::{Tape, Var};

/// Default central-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Numerical gradient of a scalar function of several matrices.
pub fn numerical_gradient<F>(inputs: &[Array2<f64>], step: f64, f: F) -> Vec<Array2<f64>>
where
    F: Fn(&[Array2<f64>]) -> f64,
{
    let mut work: Vec<Array2<f64>> = inputs.to_vec();
    let mut out = Vec::with_capacity(inputs.len());
    for k in 0..inputs.len() {
        let mut g = Array2::zeros(inputs[k].dim());
        let dim = inputs[k].dim();
        for r in 0..dim.0 {
            for c in 0..dim.1 {
                let orig = work[k][[r, c]];
                work[k][[r, c]] = orig + step;
                let fp = f(&work);
                work[k][[r, c]] = orig - step;
                let fm = f(&work);
                work[k][[r, c]] = orig;
                g[[r, c]] = (fp - fm) / (2.0 * step);
            }
        }
        out.push(g);
    }
    out
}

/// Norm-wise relative error `‖a − n‖ / max(‖n‖, ‖a‖, 1e-10)` over all inputs.
pub fn relative_error(analytic: &[Array2<f64>], numeric: &[Array2<f64>]) -> f64 {
    let mut diff = 0.0;
    let mut na = 0.0;
    let mut nn = 0.0;
    for (a, n) in analytic.iter().zip(numeric) {
        for (x, y) in a.iter().zip(n.iter()) {
            diff += (x - y) * (x - y);
            na += x * x;
            nn += y * y;
        }
    }
    diff.sqrt() / na.sqrt().max(nn.sqrt()).max(1e-10)
}

/// Compares tape gradients of `build` against central differences; returns the
/// relative error. Every input is registered as a leaf.
pub fn check_gradient<F>(inputs: &[Array2<f64>], build: F) -> f64
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Var<'t>,
{
    let tape = Tape::new();
    let vars: Vec<Var<'_>> = inputs.iter().map(|x| tape.leaf(x.clone())).collect();
    let root = build(&tape, &vars);
    let grads = tape.backward(root).expect("scalar root");
    let analytic: Vec<Array2<f64>> = vars.iter().map(|v| grads.wrt(*v)).collect();

    let numeric = numerical_gradient(inputs, FD_STEP, |xs| {
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = xs.iter().map(|x| tape.leaf(x.clone())).collect();
        build(&tape, &vars).item()
    });
    relative_error(&analytic, &numeric)
}
