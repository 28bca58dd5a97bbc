//! Conditional average treatment effects via per-graph surrogate regression.

use deci_numerics::RngStream;
use ndarray::{Array2, Axis};
use rayon::prelude::*;

use crate::error::{DeciError, Result};
use crate::graph::{sample_dags, GraphDistribution};
use crate::inference::ate::{arm_difference, cyclic_warning, mean_and_stderr};
use crate::inference::query::{CausalQuery, EffectEstimate};
use crate::inference::rff::{fit_shared, RffFeatures, DEFAULT_FEATURES, DEFAULT_LENGTHSCALE, DEFAULT_RIDGE_SCALE};
use crate::sem::{ExogenousNoise, Sem};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CateConfig {
    pub n_graphs: usize,
    pub n_per_graph: usize,
    pub n_features: usize,
    pub lengthscale: f64,
    pub ridge_scale: f64,
}

impl Default for CateConfig {
    fn default() -> Self {
        Self {
            n_graphs: 10,
            n_per_graph: 10_000,
            n_features: DEFAULT_FEATURES,
            lengthscale: DEFAULT_LENGTHSCALE,
            ridge_scale: DEFAULT_RIDGE_SCALE,
        }
    }
}

enum GraphResult {
    Effect(Vec<f64>, Vec<String>),
    Skipped(String),
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Per graph: simulate both arms with shared noise, fit one surrogate per arm
/// on shared random features of the continuous conditioning values (exact
/// stratification on discrete ones), and difference the predictions at `c`.
/// Graphs in which a treatment is an ancestor of a conditioning variable are
/// skipped.
pub fn estimate_cate(
    sem: &dyn Sem,
    graphs: &dyn GraphDistribution,
    query: &CausalQuery,
    config: &CateConfig,
    rng: &mut RngStream,
) -> Result<EffectEstimate> {
    let specs = sem.specs();
    query.validate(specs)?;
    if graphs.num_nodes() != sem.num_nodes() {
        return Err(DeciError::ShapeMismatch("graph and model node counts differ".into()));
    }
    if config.n_graphs == 0 || config.n_per_graph == 0 || config.n_features == 0 {
        return Err(DeciError::InvalidQuery("graph, sample and feature counts must be positive".into()));
    }
    let draws = sample_dags(graphs, config.n_graphs, rng)?;
    let base = rng.fork();
    let (discrete, continuous): (Vec<(usize, f64)>, Vec<(usize, f64)>) =
        query.condition.iter().partition(|(i, _)| specs[*i].kind.is_discrete());
    let results: Vec<GraphResult> = draws
        .graphs
        .par_iter()
        .enumerate()
        .map(|(gi, g)| -> Result<GraphResult> {
            for &(t, _) in &query.treatment {
                for &(c, _) in &query.condition {
                    if g.has_directed_path(t, c) {
                        return Ok(GraphResult::Skipped(format!(
                            "graph {gi} skipped: {} is an ancestor of conditioning variable {}",
                            specs[t].name, specs[c].name
                        )));
                    }
                }
            }
            let mut r = base.substream(gi as u64);
            let noise = ExogenousNoise::draw(sem, config.n_per_graph, &mut r);
            let (x, ya, yb) = arm_difference(sem, g, query, &noise)?;
            let rows: Vec<usize> = (0..x.nrows())
                .filter(|&row| discrete.iter().all(|&(i, v)| x[[row, i]] == v))
                .collect();
            if rows.is_empty() {
                return Ok(GraphResult::Skipped(format!(
                    "graph {gi} skipped: no simulated samples match the discrete condition"
                )));
            }
            let (ya, yb) = (ya.select(Axis(0), &rows), yb.select(Axis(0), &rows));
            let mut warnings = Vec::new();
            if continuous.is_empty() {
                let (ma, _) = mean_and_stderr(&ya);
                let (mb, _) = mean_and_stderr(&yb);
                return Ok(GraphResult::Effect(ma.iter().zip(&mb).map(|(a, b)| a - b).collect(), warnings));
            }
            let cols: Vec<usize> = continuous.iter().map(|c| c.0).collect();
            let xc = x.select(Axis(0), &rows).select(Axis(1), &cols);
            let c: Vec<f64> = continuous.iter().map(|c| c.1).collect();
            for (k, col) in xc.columns().into_iter().enumerate() {
                let mut v = col.to_vec();
                v.sort_by(|a, b| a.total_cmp(b));
                let (lo, hi) = (percentile(&v, 0.01), percentile(&v, 0.99));
                let name = &specs[cols[k]].name;
                if v[0] == v[v.len() - 1] {
                    warnings.push(format!("graph {gi}: {name} is constant in simulation; surrogate fits the mean"));
                } else if c[k] < lo || c[k] > hi {
                    warnings.push(format!(
                        "graph {gi}: condition {name}={} lies outside the simulated 1st-99th percentile range [{lo:.3}, {hi:.3}]",
                        c[k]
                    ));
                }
            }
            let features = RffFeatures::draw(cols.len(), config.n_features, config.lengthscale, &mut r);
            let fits = fit_shared(&features, &xc, &[&ya, &yb], config.ridge_scale)?;
            let pa = fits[0].predict_one(&c);
            let pb = fits[1].predict_one(&c);
            Ok(GraphResult::Effect(pa.iter().zip(&pb).map(|(a, b)| a - b).collect(), warnings))
        })
        .collect::<Result<_>>()?;

    let mut warnings: Vec<String> = cyclic_warning(draws.rejected, draws.graphs.len()).into_iter().collect();
    let mut effects = Vec::new();
    for r in results {
        match r {
            GraphResult::Effect(e, w) => {
                effects.push(e);
                warnings.extend(w);
            }
            GraphResult::Skipped(w) => warnings.push(w),
        }
    }
    if effects.is_empty() {
        return Err(DeciError::InvalidQuery(
            "every sampled graph has a treatment causing a conditioning variable (or no matching samples)".into(),
        ));
    }
    let k = effects[0].len();
    let m = Array2::from_shape_fn((effects.len(), k), |(r, c)| effects[r][c]);
    let (estimate, stderr) = mean_and_stderr(&m);
    Ok(EffectEstimate {
        estimate,
        stderr,
        labels: query.labels(specs),
        n_graphs_used: effects.len(),
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sem::testing::LinearGaussianSem;
    use ndarray::array;

    /// x0 confounds treatment x1 and target x2; x3 is a noisy proxy of x0.
    fn proxy_sem() -> LinearGaussianSem {
        LinearGaussianSem::new(
            array![
                [0.0, 0.8, 0.5, 0.9],
                [0.0, 0.0, 0.7, 0.0],
                [0.0, 0.0, 0.0, 0.0],
                [0.0, 0.0, 0.0, 0.0]
            ],
            vec![1.0, 0.6, 0.5, 0.5],
        )
    }

    /// E[x2 | do(x1 = a), x3 = c] by Gaussian conditioning.
    fn conditional_mean(a: f64, c: f64) -> f64 {
        let x0_given_c = 0.9 * c / (0.81 + 0.25);
        0.7 * a + 0.5 * x0_given_c
    }

    #[test]
    fn matches_gaussian_conditioning() {
        let sem = proxy_sem();
        let q = CausalQuery::cate(1, 1.0, -0.5, 2, 3, 0.8);
        let est = estimate_cate(&sem, &sem.graph(), &q, &CateConfig::default(), &mut RngStream::new(0)).unwrap();
        let truth = conditional_mean(1.0, 0.8) - conditional_mean(-0.5, 0.8);
        assert!((est.estimate[0] - truth).abs() < 0.05, "{} vs {truth}", est.estimate[0]);
        assert!(est.warnings.is_empty(), "{:?}", est.warnings);
    }

    #[test]
    fn descendant_condition_is_skipped() {
        let sem = proxy_sem();
        let q = CausalQuery::cate(0, 1.0, 0.0, 2, 3, 0.0);
        let cfg = CateConfig {
            n_graphs: 2,
            n_per_graph: 200,
            ..CateConfig::default()
        };
        assert!(estimate_cate(&sem, &sem.graph(), &q, &cfg, &mut RngStream::new(1)).is_err());
    }

    #[test]
    fn equal_arms_give_zero() {
        let sem = proxy_sem();
        let q = CausalQuery::cate(1, 0.4, 0.4, 2, 3, 0.1);
        let cfg = CateConfig {
            n_graphs: 2,
            n_per_graph: 500,
            n_features: 50,
            ..CateConfig::default()
        };
        let est = estimate_cate(&sem, &sem.graph(), &q, &cfg, &mut RngStream::new(2)).unwrap();
        assert!(est.estimate[0].abs() < 1e-9);
    }

    #[test]
    fn out_of_range_condition_warns() {
        let sem = proxy_sem();
        let q = CausalQuery::cate(1, 1.0, 0.0, 2, 3, 40.0);
        let cfg = CateConfig {
            n_graphs: 1,
            n_per_graph: 500,
            n_features: 50,
            ..CateConfig::default()
        };
        let est = estimate_cate(&sem, &sem.graph(), &q, &cfg, &mut RngStream::new(3)).unwrap();
        assert!(est.warnings.iter().any(|w| w.contains("percentile")));
    }
}
