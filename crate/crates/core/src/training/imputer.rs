//! Amortized Gaussian imputation network for missing continuous entries.

use deci_numerics::{Bound, MlpBlock, ParamStore, RngStream, Var};
use ndarray::{s, Array2};

#[derive(Debug, Clone, PartialEq)]
pub struct ImputationNetwork {
    pub params: ParamStore,
    mlp: MlpBlock,
    d: usize,
}

impl ImputationNetwork {
    /// Output layer starts at zero: every imputation is N(0, 1) initially.
    pub fn new(d: usize, hidden_dim: usize, rng: &mut RngStream) -> Self {
        let mut params = ParamStore::new();
        let mlp = MlpBlock::new(&mut params, "imputer", 2 * d, hidden_dim, 2 * d, true, rng);
        Self { params, mlp, d }
    }

    pub fn num_nodes(&self) -> usize {
        self.d
    }

    pub fn hidden_dim(&self) -> usize {
        self.mlp.hidden_dim
    }

    /// `[zero-filled x | mask]`.
    pub fn input(x: &Array2<f64>, mask: &Array2<f64>) -> Array2<f64> {
        let (n, d) = x.dim();
        let mut inp = Array2::zeros((n, 2 * d));
        for r in 0..n {
            for c in 0..d {
                if mask[[r, c]] == 0.0 {
                    inp[[r, c]] = x[[r, c]];
                }
                inp[[r, d + c]] = mask[[r, c]];
            }
        }
        inp
    }

    /// Mean and log-variance, each `N × D`.
    pub fn forward<'t>(&self, b: &Bound<'t>, input: Var<'t>) -> (Var<'t>, Var<'t>) {
        let out = self.mlp.forward(b, input);
        (out.slice_cols(0, self.d), out.slice_cols(self.d, self.d))
    }

    pub fn forward_plain(&self, input: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
        let out = self.mlp.forward_plain(&self.params, input);
        (out.slice(s![.., ..self.d]).to_owned(), out.slice(s![.., self.d..]).to_owned())
    }

    /// Fills missing entries with the imputation mean.
    pub fn impute_mean(&self, x: &Array2<f64>, mask: &Array2<f64>) -> Array2<f64> {
        let (mean, _) = self.forward_plain(&Self::input(x, mask));
        let mut out = x.clone();
        for ((r, c), v) in out.indexed_iter_mut() {
            if mask[[r, c]] != 0.0 {
                *v = mean[[r, c]];
            }
        }
        out
    }
}
