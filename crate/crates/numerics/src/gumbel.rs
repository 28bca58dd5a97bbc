//! Gumbel-softmax relaxations of categorical and binary draws.

use ndarray::Array2;

use crate::rng::RngStream;
use crate::tape::Var;

/// Relaxed sample for each row of `logits` (`N × K`, one categorical per row).
///
/// With `hard`, the forward value is the one-hot argmax of the relaxed sample
/// and gradients flow through the soft sample (straight-through).
pub fn gumbel_softmax<'t>(logits: Var<'t>, temperature: f64, hard: bool, rng: &mut RngStream) -> Var<'t> {
    assert!(temperature > 0.0, "temperature must be positive");
    let (n, k) = logits.shape();
    let noise = Array2::from_shape_fn((n, k), |_| rng.gumbel());
    let soft = (logits + logits.tape().constant(noise))
        .scale(1.0 / temperature)
        .softmax();
    if hard {
        let hv = one_hot_argmax(&soft.value());
        soft.straight_through(hv)
    } else {
        soft
    }
}

/// Binary concrete relaxation: per entry `σ((l + logistic) / τ)`, which is the
/// two-class Gumbel-softmax with logits `(l, 0)`. Hard samples are `{0, 1}`.
pub fn binary_gumbel<'t>(logits: Var<'t>, temperature: f64, hard: bool, rng: &mut RngStream) -> Var<'t> {
    assert!(temperature > 0.0, "temperature must be positive");
    let (n, k) = logits.shape();
    let noise = Array2::from_shape_fn((n, k), |_| rng.logistic());
    let soft = (logits + logits.tape().constant(noise))
        .scale(1.0 / temperature)
        .sigmoid();
    if hard {
        let hv = soft.value().mapv(|p| if p > 0.5 { 1.0 } else { 0.0 });
        soft.straight_through(hv)
    } else {
        soft
    }
}

/// Tape-free hard categorical draw via the Gumbel-max trick.
pub fn gumbel_max(logits: &[f64], rng: &mut RngStream) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, l) in logits.iter().enumerate() {
        let v = l + rng.gumbel();
        if v > best_v {
            best_v = v;
            best = i;
        }
    }
    best
}

fn one_hot_argmax(p: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros(p.dim());
    for (r, row) in p.outer_iter().enumerate() {
        let mut best = 0;
        for (c, v) in row.iter().enumerate() {
            if *v > row[best] {
                best = c;
            }
        }
        out[[r, best]] = 1.0;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tape::Tape;
    use ndarray::array;

    #[test]
    fn hard_sample_is_one_hot() {
        let mut rng = RngStream::new(1);
        let tape = Tape::new();
        let l = tape.leaf(array![[0.3, -1.0, 2.0], [0.0, 0.0, 0.0]]);
        for _ in 0..50 {
            let s = gumbel_softmax(l, 0.25, true, &mut rng).value();
            for row in s.outer_iter() {
                assert_eq!(row.sum(), 1.0);
                assert_eq!(row.iter().filter(|v| **v == 1.0).count(), 1);
            }
        }
    }

    #[test]
    fn soft_sample_is_probability_vector() {
        let mut rng = RngStream::new(2);
        let tape = Tape::new();
        let l = tape.leaf(array![[0.3, -1.0, 2.0]]);
        let s = gumbel_softmax(l, 1.0, false, &mut rng).value();
        assert!((s.sum() - 1.0).abs() < 1e-12);
        assert!(s.iter().all(|v| *v > 0.0));
    }

    #[test]
    fn low_temperature_approaches_gumbel_argmax() {
        let logits = [0.5, 1.0, -0.2, 0.1];
        for seed in 0..50 {
            let tape = Tape::new();
            let l = tape.leaf(Array2::from_shape_vec((1, 4), logits.to_vec()).unwrap());
            let soft = gumbel_softmax(l, 1e-4, false, &mut RngStream::new(seed)).value();
            let arg = gumbel_max(&logits, &mut RngStream::new(seed));
            assert!(soft[[0, arg]] > 0.999);
        }
    }

    #[test]
    fn straight_through_gradient_equals_soft_gradient() {
        let tape = Tape::new();
        let l = tape.leaf(array![[0.2, -0.4, 1.0]]);
        let w = tape.constant(array![[1.0, 2.0, 3.0]]);
        let hard = gumbel_softmax(l, 0.5, true, &mut RngStream::new(3));
        let gh = tape.backward((hard * w).sum()).unwrap().wrt(l);

        let tape2 = Tape::new();
        let l2 = tape2.leaf(array![[0.2, -0.4, 1.0]]);
        let w2 = tape2.constant(array![[1.0, 2.0, 3.0]]);
        let soft = gumbel_softmax(l2, 0.5, false, &mut RngStream::new(3));
        let gs = tape2.backward((soft * w2).sum()).unwrap().wrt(l2);
        assert_eq!(gh, gs);
    }

    #[test]
    fn hard_frequencies_match_softmax() {
        let logits = array![[0.7, -0.3, 0.0]];
        let p: Vec<f64> = {
            let e: Vec<f64> = logits.iter().map(|v: &f64| v.exp()).collect();
            let s: f64 = e.iter().sum();
            e.iter().map(|v| v / s).collect()
        };
        let n = 100_000;
        let mut rng = RngStream::new(11);
        let mut counts = [0usize; 3];
        let tape = Tape::new();
        let l = tape.constant(logits.clone());
        for _ in 0..n {
            let s = gumbel_softmax(l, 0.25, true, &mut rng).value();
            let k = s.iter().position(|v| *v == 1.0).unwrap();
            counts[k] += 1;
        }
        for k in 0..3 {
            let f = counts[k] as f64 / n as f64;
            let se = (p[k] * (1.0 - p[k]) / n as f64).sqrt();
            assert!((f - p[k]).abs() < 3.0 * se, "class {k}: {f} vs {}", p[k]);
        }
    }

    #[test]
    fn binary_frequencies_match_sigmoid() {
        let n = 100_000;
        let mut rng = RngStream::new(12);
        let tape = Tape::new();
        let l = tape.constant(array![[0.8]]);
        let mut ones = 0;
        for _ in 0..n {
            ones += binary_gumbel(l, 0.25, true, &mut rng).item() as usize;
        }
        let p = 1.0 / (1.0 + (-0.8f64).exp());
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((ones as f64 / n as f64 - p).abs() < 3.0 * se);
    }
}
