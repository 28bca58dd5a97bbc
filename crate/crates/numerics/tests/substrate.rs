use deci_numerics::gradcheck::check_gradient;
use deci_numerics::gumbel::binary_gumbel;
use deci_numerics::spline::{identity_raw, raw_len};
use deci_numerics::{AdamState, MlpBlock, ParamStore, RngStream, RqSpline, Tape};
use ndarray::Array2;

#[test]
fn adam_fits_a_regression_through_an_mlp() {
    let mut rng = RngStream::new(11);
    let mut store = ParamStore::new();
    let block = MlpBlock::new(&mut store, "f", 1, 16, 1, false, &mut rng);
    let x = Array2::from_shape_fn((64, 1), |(i, _)| -2.0 + 4.0 * i as f64 / 63.0);
    let y = x.mapv(|v: f64| v.sin());
    let mut adam = AdamState::new(&store, 0.01);
    let loss_at = |store: &ParamStore| {
        let tape = Tape::new();
        let b = store.bind(&tape);
        let pred = block.forward(&b, tape.constant(x.clone()));
        let diff = pred - tape.constant(y.clone());
        diff.square().mean().item()
    };
    let start = loss_at(&store);
    for _ in 0..800 {
        let tape = Tape::new();
        let b = store.bind(&tape);
        let pred = block.forward(&b, tape.constant(x.clone()));
        let loss = (pred - tape.constant(y.clone())).square().mean();
        let g = tape.backward(loss).unwrap();
        adam.step(&mut store, &b.grads(&g)).unwrap();
    }
    let end = loss_at(&store);
    assert!(end < 0.01 * start && end < 2e-3, "{start} -> {end}");
}

#[test]
fn random_splines_round_trip_and_are_monotone() {
    let mut rng = RngStream::new(5);
    for _ in 0..50 {
        let raw: Vec<f64> = (0..raw_len(8)).map(|_| 2.0 * rng.normal()).collect();
        let s = RqSpline::from_raw(raw, 8, 3.0);
        let mut prev = f64::NEG_INFINITY;
        for i in 0..=400 {
            let x = -4.0 + 8.0 * i as f64 / 400.0;
            let (y, logdet) = s.forward(x);
            let (back, inv_logdet) = s.inverse(y);
            assert!((back - x).abs() < 1e-8);
            assert!((logdet + inv_logdet).abs() < 1e-8);
            assert!(y > prev && logdet.is_finite());
            prev = y;
        }
    }
    let id = RqSpline::from_raw(identity_raw(8), 8, 3.0);
    assert!((id.forward(1.3).0 - 1.3).abs() < 1e-12);
}

#[test]
fn layer_norm_residual_chain_gradient() {
    let mut rng = RngStream::new(2);
    for _ in 0..20 {
        let x = Array2::from_shape_fn((5, 3), |_| rng.normal());
        let w = Array2::from_shape_fn((3, 3), |_| rng.normal());
        let err = check_gradient(&[x, w], |_, v| {
            let h = v[0].matmul(v[1]).layer_norm(1e-5).tanh();
            (h + v[0]).softplus().sum()
        });
        assert!(err < 1e-4, "{err}");
    }
}

#[test]
fn hard_binary_gumbel_frequency_tracks_sigmoid() {
    let mut rng = RngStream::new(9);
    let logits = Array2::from_shape_vec((1, 3), vec![-1.0, 0.0, 2.0]).unwrap();
    let mut hits = [0usize; 3];
    let n = 20000;
    for _ in 0..n {
        let tape = Tape::new();
        let s = binary_gumbel(tape.constant(logits.clone()), 0.25, true, &mut rng);
        for (h, v) in hits.iter_mut().zip(s.value().iter()) {
            assert!(*v == 0.0 || *v == 1.0);
            *h += *v as usize;
        }
    }
    for (h, l) in hits.iter().zip(logits.iter()) {
        let p = 1.0 / (1.0 + (-l).exp());
        assert!((*h as f64 / n as f64 - p).abs() < 0.015);
    }
}

#[test]
fn substreams_are_reproducible_and_distinct() {
    let root = RngStream::new(42);
    let a: Vec<f64> = {
        let mut r = root.substream(3);
        (0..10).map(|_| r.uniform()).collect()
    };
    let b: Vec<f64> = {
        let mut r = RngStream::new(42).substream(3);
        (0..10).map(|_| r.uniform()).collect()
    };
    let c: Vec<f64> = {
        let mut r = root.substream(4);
        (0..10).map(|_| r.uniform()).collect()
    };
    assert_eq!(a, b);
    assert_ne!(a, c);
}
