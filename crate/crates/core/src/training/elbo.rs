//! Single-sample ELBO estimates, fully observed and with imputation.

use deci_numerics::{Bound, RngStream, Tape, Var};
use ndarray::Array2;

use crate::error::{DeciError, Result};
use crate::graph::{dag_penalty, GraphPrior, VariationalGraphPosterior};
use crate::sem::{DeciModel, LN_2PI};
use crate::training::imputer::ImputationNetwork;

/// The ELBO on the tape plus the values of its parts.
pub struct ElboParts<'t> {
    pub elbo: Var<'t>,
    /// Batch log-likelihood sum (unscaled).
    pub log_likelihood: f64,
    pub prior: f64,
    pub entropy: f64,
    /// Batch sum of imputation entropies (unscaled).
    pub imputation_entropy: f64,
    /// `h(G)` of the hard graph sample.
    pub penalty: f64,
}

/// Imputation network bound on the same tape as the model.
pub struct Imputation<'a, 't> {
    pub net: &'a ImputationNetwork,
    pub bound: &'a Bound<'t>,
}

fn check_batch(model: &DeciModel, batch: &Array2<f64>) -> Result<()> {
    if batch.nrows() == 0 {
        return Err(DeciError::InvalidData("empty batch".into()));
    }
    if batch.ncols() != model.num_nodes() {
        return Err(DeciError::ShapeMismatch(format!(
            "batch has {} columns, model {}",
            batch.ncols(),
            model.num_nodes()
        )));
    }
    Ok(())
}

/// `(N/B) Σ log p(x | G) + log p(G) + H(q)` with one straight-through graph
/// sample `G ~ q`. The prior sees the binary sample; gradients reach the
/// posterior logits through the relaxation.
#[allow(clippy::too_many_arguments)]
pub fn elbo_estimate<'t>(
    tape: &'t Tape,
    model: &DeciModel,
    model_bound: &Bound<'t>,
    posterior: &VariationalGraphPosterior,
    posterior_bound: &Bound<'t>,
    prior: &GraphPrior,
    batch: &Array2<f64>,
    n_total: usize,
    temperature: f64,
    rng: &mut RngStream,
) -> Result<ElboParts<'t>> {
    check_batch(model, batch)?;
    if batch.iter().any(|v| v.is_nan()) {
        return Err(DeciError::InvalidData("batch has missing values; use elbo_missing".into()));
    }
    let w = posterior.sample_var(posterior_bound, temperature, rng);
    let x = tape.constant(batch.clone());
    assemble(model, model_bound, posterior, posterior_bound, prior, batch, x, None, n_total, w)
}

/// ELBO with missing continuous entries (NaN in `batch`) imputed by a
/// reparameterized Gaussian draw from the imputation network; the Gaussian
/// entropy `½ Σ (1 + ln 2π + ln σ²)` over missing cells is added per sample.
#[allow(clippy::too_many_arguments)]
pub fn elbo_missing<'t>(
    tape: &'t Tape,
    model: &DeciModel,
    model_bound: &Bound<'t>,
    posterior: &VariationalGraphPosterior,
    posterior_bound: &Bound<'t>,
    imputation: Imputation<'_, 't>,
    prior: &GraphPrior,
    batch: &Array2<f64>,
    n_total: usize,
    temperature: f64,
    rng: &mut RngStream,
) -> Result<ElboParts<'t>> {
    check_batch(model, batch)?;
    let (n, d) = batch.dim();
    let mask = batch.mapv(|v| if v.is_nan() { 1.0 } else { 0.0 });
    for (i, spec) in model.specs.iter().enumerate() {
        if spec.kind.is_discrete() && mask.column(i).iter().any(|m| *m != 0.0) {
            return Err(DeciError::Unsupported(format!(
                "missing values in discrete variable {}",
                spec.name
            )));
        }
    }
    let w = posterior.sample_var(posterior_bound, temperature, rng);
    let mut eps = Array2::zeros((n, d));
    for ((r, c), m) in mask.indexed_iter() {
        if *m != 0.0 {
            eps[[r, c]] = rng.normal();
        }
    }
    let filled = batch.mapv(|v| if v.is_nan() { 0.0 } else { v });
    let input = tape.constant(ImputationNetwork::input(&filled, &mask));
    let (mean, log_var) = imputation.net.forward(imputation.bound, input);
    let m = tape.constant(mask.clone());
    let draw = mean + log_var.scale(0.5).exp() * tape.constant(eps);
    let x = tape.constant(filled.clone()) + draw * m;
    let ent = (log_var.offset(1.0 + LN_2PI) * m).sum().scale(0.5);
    assemble(
        model,
        model_bound,
        posterior,
        posterior_bound,
        prior,
        &filled,
        x,
        Some(ent),
        n_total,
        w,
    )
}

#[allow(clippy::too_many_arguments)]
fn assemble<'t>(
    model: &DeciModel,
    model_bound: &Bound<'t>,
    posterior: &VariationalGraphPosterior,
    posterior_bound: &Bound<'t>,
    prior: &GraphPrior,
    x_raw: &Array2<f64>,
    x: Var<'t>,
    imputation_entropy: Option<Var<'t>>,
    n_total: usize,
    w: Var<'t>,
) -> Result<ElboParts<'t>> {
    let scale = n_total as f64 / x_raw.nrows() as f64;
    let ll = model.log_likelihood_var(model_bound, x, x_raw, w);
    let lp = prior.log_density_var(w)?;
    let h = posterior.entropy_var(posterior_bound);
    let mut per_sample = ll;
    if let Some(e) = imputation_entropy {
        per_sample = per_sample + e;
    }
    let elbo = per_sample.scale(scale) + lp + h;
    Ok(ElboParts {
        elbo,
        log_likelihood: ll.item(),
        prior: lp.item(),
        entropy: h.item(),
        imputation_entropy: imputation_entropy.map(|e| e.item()).unwrap_or(0.0),
        penalty: dag_penalty(&w.value())?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::default_specs;
    use crate::graph::AdjacencyMatrix;
    use crate::sem::model::tests_support::randomized;
    use crate::sem::{ModelConfig, NoiseKind};
    use deci_numerics::gradcheck::{numerical_gradient, relative_error, FD_STEP};

    fn model(d: usize, noise: NoiseKind, rng: &mut RngStream) -> DeciModel {
        let cfg = ModelConfig {
            noise,
            hidden_dim: 6,
            ..ModelConfig::default()
        };
        DeciModel::new(default_specs(d), cfg, rng).unwrap()
    }

    fn value(
        m: &DeciModel,
        q: &VariationalGraphPosterior,
        prior: &GraphPrior,
        x: &Array2<f64>,
        n_total: usize,
        rng: &mut RngStream,
    ) -> (f64, f64, f64) {
        let tape = Tape::new();
        let mb = m.params.bind(&tape);
        let pb = q.params.bind(&tape);
        let parts = elbo_estimate(&tape, m, &mb, q, &pb, prior, x, n_total, 0.25, rng).unwrap();
        (parts.elbo.item(), parts.entropy, parts.penalty)
    }

    #[test]
    fn saturated_zero_model_example() {
        let mut rng = RngStream::new(0);
        let d = 3;
        let m = model(d, NoiseKind::Gaussian, &mut rng);
        let g = AdjacencyMatrix::from_edges(d, &[(0, 1), (1, 2)]).unwrap();
        let q = VariationalGraphPosterior::point_mass(&g, 30.0).unwrap();
        let prior = GraphPrior::new(0.0, 0.0, 0.0);
        let (elbo, entropy, penalty) = value(&m, &q, &prior, &Array2::zeros((1, d)), 1, &mut rng);
        let expected = -(d as f64) / 2.0 * LN_2PI;
        assert!((elbo - expected).abs() < 1e-9, "{elbo}");
        assert!((entropy - q.entropy()).abs() < 1e-12 && entropy < 1e-9);
        assert_eq!(penalty, 0.0);
    }

    #[test]
    fn entropy_term_is_exact() {
        let mut rng = RngStream::new(1);
        let m = model(3, NoiseKind::Spline, &mut rng);
        let q = VariationalGraphPosterior::from_logits(3, vec![0.3, -1.0, 2.0], vec![0.5, 0.0, -0.7]).unwrap();
        let prior = GraphPrior::new(5.0, 1.0, 0.0);
        let x = Array2::from_shape_fn((4, 3), |_| rng.normal());
        for _ in 0..5 {
            assert!((value(&m, &q, &prior, &x, 10, &mut rng).1 - q.entropy()).abs() < 1e-12);
        }
    }

    #[test]
    fn elbo_bounds_enumerated_evidence() {
        let mut rng = RngStream::new(2);
        let m = randomized(model(2, NoiseKind::Spline, &mut rng), &mut rng);
        let q = VariationalGraphPosterior::from_logits(2, vec![0.4], vec![-0.3]).unwrap();
        let prior = GraphPrior::new(5.0, 0.0, 0.0);
        let x = Array2::from_shape_fn((6, 2), |_| rng.normal());
        let graphs = [
            AdjacencyMatrix::empty(2),
            AdjacencyMatrix::from_edges(2, &[(0, 1)]).unwrap(),
            AdjacencyMatrix::from_edges(2, &[(1, 0)]).unwrap(),
        ];
        let terms: Vec<f64> = graphs
            .iter()
            .map(|g| {
                let w = g.to_matrix();
                m.log_likelihood(&x, &w).unwrap() + prior.log_density(&w).unwrap()
            })
            .collect();
        let top = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let evidence = top + terms.iter().map(|t| (t - top).exp()).sum::<f64>().ln();

        let draws = 10_000;
        let vals: Vec<f64> = (0..draws).map(|_| value(&m, &q, &prior, &x, 6, &mut rng).0).collect();
        let mean = vals.iter().sum::<f64>() / draws as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (draws - 1) as f64;
        let se = (var / draws as f64).sqrt();
        assert!(mean <= evidence + 5.0 * se, "{mean} vs {evidence} (se {se})");

        // the exact expectation under q matches the Monte Carlo mean
        let p = q.edge_probabilities();
        let probs = [1.0 - p[[0, 1]] - p[[1, 0]], p[[0, 1]], p[[1, 0]]];
        let exact: f64 = probs.iter().zip(&terms).map(|(a, b)| a * b).sum::<f64>() + q.entropy();
        assert!((mean - exact).abs() < 5.0 * se, "{mean} vs {exact}");
        assert!(exact <= evidence);
    }

    fn missing_value(
        m: &DeciModel,
        q: &VariationalGraphPosterior,
        net: &ImputationNetwork,
        x: &Array2<f64>,
        rng: &mut RngStream,
    ) -> (f64, f64, Vec<Array2<f64>>) {
        let tape = Tape::new();
        let mb = m.params.bind(&tape);
        let pb = q.params.bind(&tape);
        let ib = net.params.bind(&tape);
        let prior = GraphPrior::new(5.0, 1.0, 0.0);
        let parts = elbo_missing(
            &tape,
            m,
            &mb,
            q,
            &pb,
            Imputation { net, bound: &ib },
            &prior,
            x,
            20,
            0.25,
            rng,
        )
        .unwrap();
        let v = parts.elbo.item();
        let g = tape.backward(parts.elbo).unwrap();
        (v, parts.imputation_entropy, ib.grads(&g))
    }

    fn random_imputer(d: usize, rng: &mut RngStream) -> ImputationNetwork {
        let mut net = ImputationNetwork::new(d, 6, rng);
        for p in net.params.iter_mut() {
            p.value.mapv_inplace(|v| v + 0.3 * rng.normal());
        }
        net
    }

    #[test]
    fn fully_observed_batch_reduces_to_elbo_estimate() {
        let mut rng = RngStream::new(3);
        let m = randomized(model(3, NoiseKind::Spline, &mut rng), &mut rng);
        let q = VariationalGraphPosterior::from_logits(3, vec![0.3, 1.0, -0.2], vec![0.1, 0.9, -0.4]).unwrap();
        let net = random_imputer(3, &mut rng);
        let x = Array2::from_shape_fn((5, 3), |_| rng.normal());
        let prior = GraphPrior::new(5.0, 1.0, 0.0);
        let (with_missing, ent, _) = missing_value(&m, &q, &net, &x, &mut rng.clone());
        let plain = value(&m, &q, &prior, &x, 20, &mut rng.clone()).0;
        assert_eq!(with_missing, plain);
        assert_eq!(ent, 0.0);
    }

    #[test]
    fn imputation_entropy_closed_form() {
        let mut rng = RngStream::new(4);
        let m = model(3, NoiseKind::Gaussian, &mut rng);
        let q = VariationalGraphPosterior::new(3);
        let net = random_imputer(3, &mut rng);
        let mut x = Array2::from_shape_fn((6, 3), |_| rng.normal());
        for (r, c) in [(0, 0), (1, 2), (2, 1), (2, 2), (5, 0)] {
            x[[r, c]] = f64::NAN;
        }
        let mask = x.mapv(|v| if v.is_nan() { 1.0 } else { 0.0 });
        let filled = x.mapv(|v| if v.is_nan() { 0.0 } else { v });
        let (_, log_var) = net.forward_plain(&ImputationNetwork::input(&filled, &mask));
        let expected: f64 = mask
            .indexed_iter()
            .filter(|(_, m)| **m != 0.0)
            .map(|(i, _)| 0.5 * (1.0 + LN_2PI + log_var[i]))
            .sum();
        let (_, ent, _) = missing_value(&m, &q, &net, &x, &mut rng);
        assert!((ent - expected).abs() < 1e-12);
    }

    #[test]
    fn imputer_gradient_matches_finite_differences() {
        let mut checked = 0;
        for seed in 0..40u64 {
            let mut rng = RngStream::new(100 + seed);
            let m = randomized(model(3, NoiseKind::Spline, &mut rng), &mut rng);
            let q = VariationalGraphPosterior::from_logits(3, vec![0.5, -0.5, 1.0], vec![0.2, -0.1, 0.3]).unwrap();
            let net = random_imputer(3, &mut rng);
            let mut x = Array2::from_shape_fn((4, 3), |_| rng.normal());
            x[[0, 1]] = f64::NAN;
            x[[2, 0]] = f64::NAN;
            x[[3, 2]] = f64::NAN;
            let draw = rng.clone();
            let (_, _, analytic) = missing_value(&m, &q, &net, &x, &mut draw.clone());
            let inputs: Vec<Array2<f64>> = net.params.iter().map(|p| p.value.clone()).collect();
            let fd = |step| {
                numerical_gradient(&inputs, step, |vals| {
                    let mut n2 = net.clone();
                    for (p, v) in n2.params.iter_mut().zip(vals) {
                        p.value.assign(v);
                    }
                    missing_value(&m, &q, &n2, &x, &mut draw.clone()).0
                })
            };
            let numeric = fd(FD_STEP);
            if relative_error(&numeric, &fd(FD_STEP / 10.0)) > 1e-5 {
                continue;
            }
            let err = relative_error(&analytic, &numeric);
            assert!(err < 1e-4, "seed {seed}: {err}");
            checked += 1;
            if checked == 20 {
                return;
            }
        }
        panic!("only {checked} smooth instances");
    }
}
