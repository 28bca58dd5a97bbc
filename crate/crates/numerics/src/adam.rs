//! Adam with bias correction.

use ndarray::{Array2, Zip};

use crate::params::ParamStore;
use crate::NumericsError;

#[derive(Debug, Clone)]
pub struct AdamState {
    pub step_size: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    first: Vec<Array2<f64>>,
    second: Vec<Array2<f64>>,
}

impl AdamState {
    /// Zero moments shaped like `params`.
    pub fn new(params: &ParamStore, step_size: f64) -> Self {
        let zeros: Vec<Array2<f64>> = params.iter().map(|p| Array2::zeros(p.value.dim())).collect();
        Self {
            step_size,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One descent step on `params` along `grads` (gradients of the loss).
    pub fn step(&mut self, params: &mut ParamStore, grads: &[Array2<f64>]) -> Result<(), NumericsError> {
        if grads.len() != params.len() || grads.len() != self.first.len() {
            return Err(NumericsError::ShapeMismatch(format!(
                "adam: {} gradients for {} parameters ({} moments)",
                grads.len(),
                params.len(),
                self.first.len()
            )));
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.first) {
            if p.value.dim() != g.dim() || m.dim() != g.dim() {
                return Err(NumericsError::ShapeMismatch(format!(
                    "adam: parameter {} is {:?}, gradient {:?}",
                    p.name,
                    p.value.dim(),
                    g.dim()
                )));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, eps, lr) = (self.beta1, self.beta2, self.eps, self.step_size);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first.iter_mut())
            .zip(self.second.iter_mut())
        {
            Zip::from(&mut p.value)
                .and(g)
                .and(m)
                .and(v)
                .for_each(|x, &g, m, v| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    let mhat = *m / bc1;
                    let vhat = *v / bc2;
                    *x -= lr * mhat / (vhat.sqrt() + eps);
                });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn store(v: Array2<f64>) -> ParamStore {
        let mut s = ParamStore::new();
        s.add("w", v);
        s
    }

    #[test]
    fn first_step_moves_by_step_size_times_sign() {
        let mut p = store(array![[1.0, -2.0, 0.5]]);
        let mut adam = AdamState::new(&p, 0.01);
        adam.step(&mut p, &[array![[3.0, -0.2, 1e-3]]]).unwrap();
        let expected = [1.0 - 0.01, -2.0 + 0.01, 0.5 - 0.01];
        for (x, e) in p.get(crate::ParamId(0)).iter().zip(expected) {
            assert!((x - e).abs() < 1e-6, "{x} vs {e}");
        }
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = store(array![[1.0, 2.0]]);
        let mut adam = AdamState::new(&p, 0.01);
        adam.step(&mut p, &[array![[0.0, 0.0]]]).unwrap();
        assert_eq!(p.get(crate::ParamId(0)), &array![[1.0, 2.0]]);
    }

    #[test]
    fn two_steps_match_hand_recurrence() {
        // constant gradient g = 2, lr = 0.1
        // t=1: m=0.2 v=0.004 mhat=2 vhat=4 -> dx = 0.1*2/(2+1e-8)
        // t=2: m=0.38 v=0.007996 mhat=0.38/0.19=2 vhat=0.007996/0.001999=4
        let mut p = store(array![[0.0]]);
        let mut adam = AdamState::new(&p, 0.1);
        adam.step(&mut p, &[array![[2.0]]]).unwrap();
        adam.step(&mut p, &[array![[2.0]]]).unwrap();
        let expected = -2.0 * 0.1 * 2.0 / (2.0 + 1e-8);
        assert!((p.get(crate::ParamId(0))[[0, 0]] - expected).abs() < 1e-12);
        assert_eq!(adam.steps_taken(), 2);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut p = store(array![[1.0, 2.0]]);
        let mut adam = AdamState::new(&p, 0.01);
        assert!(adam.step(&mut p, &[array![[1.0]]]).is_err());
        assert!(adam.step(&mut p, &[]).is_err());
    }
}
