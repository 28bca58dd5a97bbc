//! Two-hidden-layer MLP with layer normalization and a residual connection.
//!
//! ```text
//! h1  = act(LN(x W0 + b0) * g1 + c1)
//! h2  = h1 + act(LN(h1 W1 + b1) * g2 + c2)
//! out = h2 W2 + b2
//! ```

use ndarray::{Array2, Axis, Zip};

use crate::params::{Bound, ParamId, ParamStore};
use crate::rng::RngStream;
use crate::tape::Var;

pub const LAYER_NORM_EPS: f64 = 1e-5;
pub const LEAKY_SLOPE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct MlpBlock {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
    w0: ParamId,
    b0: ParamId,
    g1: ParamId,
    c1: ParamId,
    w1: ParamId,
    b1: ParamId,
    g2: ParamId,
    c2: ParamId,
    w2: ParamId,
    b2: ParamId,
}

fn glorot(rng: &mut RngStream, fan_in: usize, fan_out: usize) -> Array2<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Array2::from_shape_fn((fan_in, fan_out), |_| rng.uniform_range(-limit, limit))
}

impl MlpBlock {
    /// Registers the block's parameters in `store` under `name.*`. With
    /// `zero_output` the final layer starts at zero, so the block outputs 0.
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input_dim: usize,
        hidden_dim: usize,
        output_dim: usize,
        zero_output: bool,
        rng: &mut RngStream,
    ) -> Self {
        let mut add = |suffix: &str, v: Array2<f64>| store.add(format!("{name}.{suffix}"), v);
        let w0 = add("w0", glorot(rng, input_dim, hidden_dim));
        let b0 = add("b0", Array2::zeros((1, hidden_dim)));
        let g1 = add("ln1.gain", Array2::ones((1, hidden_dim)));
        let c1 = add("ln1.bias", Array2::zeros((1, hidden_dim)));
        let w1 = add("w1", glorot(rng, hidden_dim, hidden_dim));
        let b1 = add("b1", Array2::zeros((1, hidden_dim)));
        let g2 = add("ln2.gain", Array2::ones((1, hidden_dim)));
        let c2 = add("ln2.bias", Array2::zeros((1, hidden_dim)));
        let w2 = if zero_output {
            add("w2", Array2::zeros((hidden_dim, output_dim)))
        } else {
            add("w2", glorot(rng, hidden_dim, output_dim))
        };
        let b2 = add("b2", Array2::zeros((1, output_dim)));
        Self {
            input_dim,
            hidden_dim,
            output_dim,
            w0,
            b0,
            g1,
            c1,
            w1,
            b1,
            g2,
            c2,
            w2,
            b2,
        }
    }

    pub fn forward<'t>(&self, p: &Bound<'t>, x: Var<'t>) -> Var<'t> {
        let h1 = x
            .matmul(p.var(self.w0))
            .add_row(p.var(self.b0))
            .layer_norm(LAYER_NORM_EPS)
            .mul_row(p.var(self.g1))
            .add_row(p.var(self.c1))
            .leaky_relu(LEAKY_SLOPE);
        let inner = h1
            .matmul(p.var(self.w1))
            .add_row(p.var(self.b1))
            .layer_norm(LAYER_NORM_EPS)
            .mul_row(p.var(self.g2))
            .add_row(p.var(self.c2))
            .leaky_relu(LEAKY_SLOPE);
        let h2 = h1 + inner;
        h2.matmul(p.var(self.w2)).add_row(p.var(self.b2))
    }

    /// Tape-free evaluation with the same arithmetic as [`MlpBlock::forward`].
    pub fn forward_plain(&self, store: &ParamStore, x: &Array2<f64>) -> Array2<f64> {
        let hidden = |x: &Array2<f64>, w, b, g, c| {
            let mut h = x.dot(store.get(w)) + store.get(b);
            layer_norm_inplace(&mut h);
            h *= store.get(g);
            h += store.get(c);
            h.mapv_inplace(|v| if v > 0.0 { v } else { LEAKY_SLOPE * v });
            h
        };
        let h1 = hidden(x, self.w0, self.b0, self.g1, self.c1);
        let inner = hidden(&h1, self.w1, self.b1, self.g2, self.c2);
        let h2 = h1 + inner;
        h2.dot(store.get(self.w2)) + store.get(self.b2)
    }
}

fn layer_norm_inplace(h: &mut Array2<f64>) {
    let n = h.ncols() as f64;
    for mut row in h.axis_iter_mut(Axis(0)) {
        let mean = row.sum() / n;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let is = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        Zip::from(&mut row).for_each(|v| *v = (*v - mean) * is);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{numerical_gradient, relative_error, FD_STEP};
    use crate::tape::Tape;

    fn random_block(seed: u64, zero_output: bool) -> (ParamStore, MlpBlock) {
        let mut rng = RngStream::new(seed);
        let mut store = ParamStore::new();
        let mlp = MlpBlock::new(&mut store, "f", 3, 8, 2, zero_output, &mut rng);
        // perturb layer-norm affine away from identity so its gradient is exercised
        for p in store.iter_mut() {
            if p.name.contains("ln") || p.name.contains(".b") {
                p.value.mapv_inplace(|v| v + 0.3 * rng.normal());
            }
        }
        (store, mlp)
    }

    #[test]
    fn plain_and_tape_forward_agree() {
        let (store, mlp) = random_block(1, false);
        let mut rng = RngStream::new(2);
        let x = Array2::from_shape_fn((5, 3), |_| rng.normal());
        let tape = Tape::new();
        let b = store.bind(&tape);
        let y = mlp.forward(&b, tape.constant(x.clone()));
        let y2 = mlp.forward_plain(&store, &x);
        for (a, c) in y.value().iter().zip(y2.iter()) {
            assert!((a - c).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_output_block_outputs_zero() {
        let (mut store, mlp) = random_block(3, true);
        // the random perturbation above touched b2; reset it
        let b2 = store.find("f.b2").unwrap();
        store.get_mut(b2).fill(0.0);
        let x = Array2::from_shape_fn((4, 3), |(i, j)| (i * 3 + j) as f64);
        assert!(mlp.forward_plain(&store, &x).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn gradient_matches_finite_differences_on_random_blocks() {
        for seed in 0..20 {
            let (store, mlp) = random_block(100 + seed, false);
            let mut rng = RngStream::new(200 + seed);
            let x = Array2::from_shape_fn((4, 3), |_| rng.normal());

            let tape = Tape::new();
            let b = store.bind(&tape);
            let xv = tape.leaf(x.clone());
            let out = mlp.forward(&b, xv).sum();
            let grads = tape.backward(out).unwrap();
            let mut analytic = b.grads(&grads);
            analytic.push(grads.wrt(xv));

            let mut inputs: Vec<Array2<f64>> = store.iter().map(|p| p.value.clone()).collect();
            inputs.push(x.clone());
            let numeric = numerical_gradient(&inputs, FD_STEP, |vals| {
                let mut s = store.clone();
                for (p, v) in s.iter_mut().zip(vals) {
                    p.value.assign(v);
                }
                mlp.forward_plain(&s, &vals[vals.len() - 1]).sum()
            });
            let err = relative_error(&analytic, &numeric);
            assert!(err < 1e-4, "seed {seed}: relative error {err}");
        }
    }
}
