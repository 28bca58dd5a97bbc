//! Average treatment effects by simulation on mutilated posterior graphs.

use deci_numerics::RngStream;
use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{DeciError, Result};
use crate::graph::{sample_dags, AdjacencyMatrix, GraphDistribution};
use crate::inference::query::{CausalQuery, EffectEstimate};
use crate::sem::{simulate, target_expectation, ExogenousNoise, Sem};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AteConfig {
    pub n_graphs: usize,
    pub n_per_graph: usize,
}

impl Default for AteConfig {
    fn default() -> Self {
        Self {
            n_graphs: 1000,
            n_per_graph: 2,
        }
    }
}

/// Targets (expectations for discrete nodes) stacked column-wise.
pub(crate) fn stacked_targets(sem: &dyn Sem, x: &Array2<f64>, g: &AdjacencyMatrix, targets: &[usize]) -> Array2<f64> {
    let parts: Vec<Array2<f64>> = targets.iter().map(|&t| target_expectation(sem, x, g, t)).collect();
    let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
    ndarray::concatenate(ndarray::Axis(1), &views).expect("same row count")
}

/// Treated-minus-reference target differences for one graph, one row per
/// sample. Both arms share the same exogenous noise.
pub(crate) fn arm_difference(
    sem: &dyn Sem,
    g: &AdjacencyMatrix,
    query: &CausalQuery,
    noise: &ExogenousNoise,
) -> Result<(Array2<f64>, Array2<f64>, Array2<f64>)> {
    let xa = simulate(sem, g, &query.treatment, noise)?;
    let xb = simulate(sem, g, &query.reference, noise)?;
    let ya = stacked_targets(sem, &xa, g, &query.targets);
    let yb = stacked_targets(sem, &xb, g, &query.targets);
    Ok((xa, ya, yb))
}

pub(crate) fn cyclic_warning(rejected: usize, kept: usize) -> Option<String> {
    (rejected > 0).then(|| format!("rejected {rejected} cyclic posterior draws while collecting {kept} DAGs"))
}

/// `E_G E[x_Y | do(x_T = a)] − E[x_Y | do(x_T = b)]` from `n_graphs` DAG draws
/// with `n_per_graph` common-random-number samples each.
pub fn estimate_ate(
    sem: &dyn Sem,
    graphs: &dyn GraphDistribution,
    query: &CausalQuery,
    config: &AteConfig,
    rng: &mut RngStream,
) -> Result<EffectEstimate> {
    query.validate(sem.specs())?;
    if !query.condition.is_empty() {
        return Err(DeciError::InvalidQuery("ATE queries take no condition; use CATE".into()));
    }
    if graphs.num_nodes() != sem.num_nodes() {
        return Err(DeciError::ShapeMismatch("graph and model node counts differ".into()));
    }
    if config.n_graphs == 0 || config.n_per_graph == 0 {
        return Err(DeciError::InvalidQuery("need at least one graph and one sample".into()));
    }
    let draws = sample_dags(graphs, config.n_graphs, rng)?;
    let base = rng.fork();
    let diffs: Vec<Array2<f64>> = draws
        .graphs
        .par_iter()
        .enumerate()
        .map(|(i, g)| {
            let mut r = base.substream(i as u64);
            let noise = ExogenousNoise::draw(sem, config.n_per_graph, &mut r);
            let (_, ya, yb) = arm_difference(sem, g, query, &noise)?;
            Ok(ya - yb)
        })
        .collect::<Result<_>>()?;
    let views: Vec<_> = diffs.iter().map(|d| d.view()).collect();
    let all = ndarray::concatenate(ndarray::Axis(0), &views).expect("same width");
    let (estimate, stderr) = mean_and_stderr(&all);
    Ok(EffectEstimate {
        estimate,
        stderr,
        labels: query.labels(sem.specs()),
        n_graphs_used: draws.graphs.len(),
        warnings: cyclic_warning(draws.rejected, draws.graphs.len()).into_iter().collect(),
    })
}

/// Column means and standard errors of the mean.
pub(crate) fn mean_and_stderr(x: &Array2<f64>) -> (Vec<f64>, Vec<f64>) {
    let n = x.nrows() as f64;
    x.columns()
        .into_iter()
        .map(|c| {
            let m = c.sum() / n;
            if x.nrows() < 2 {
                return (m, 0.0);
            }
            let var = c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0);
            (m, (var / n).sqrt())
        })
        .unzip()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sem::testing::LinearGaussianSem;
    use ndarray::array;

    /// x0 -> x1 -> x2 and x0 -> x2.
    fn triangle() -> LinearGaussianSem {
        LinearGaussianSem::new(
            array![[0.0, 0.8, 0.5], [0.0, 0.0, 0.7], [0.0, 0.0, 0.0]],
            vec![1.0, 0.6, 0.9],
        )
    }

    #[test]
    fn linear_gaussian_total_effect() {
        let sem = triangle();
        let q = CausalQuery::ate(0, 1.0, 0.0, 2);
        let cfg = AteConfig {
            n_graphs: 10,
            n_per_graph: 10_000,
        };
        let est = estimate_ate(&sem, &sem.graph(), &q, &cfg, &mut RngStream::new(0)).unwrap();
        let truth = 0.5 + 0.8 * 0.7;
        let tol = (3.0 * est.stderr[0]).max(1e-9);
        assert!((est.estimate[0] - truth).abs() <= tol, "{} vs {truth}", est.estimate[0]);
        assert_eq!(est.n_graphs_used, 10);
    }

    #[test]
    fn equal_arms_and_sink_treatment_give_zero() {
        let sem = triangle();
        let g = sem.graph();
        let cfg = AteConfig {
            n_graphs: 3,
            n_per_graph: 500,
        };
        let same = estimate_ate(&sem, &g, &CausalQuery::ate(0, 1.3, 1.3, 2), &cfg, &mut RngStream::new(1)).unwrap();
        assert_eq!(same.estimate, vec![0.0]);
        assert_eq!(same.stderr, vec![0.0]);
        let sink = estimate_ate(&sem, &g, &CausalQuery::ate(2, 5.0, -5.0, 0), &cfg, &mut RngStream::new(2)).unwrap();
        assert_eq!(sink.estimate, vec![0.0]);
    }

    #[test]
    fn rejects_conditions_and_bad_counts() {
        let sem = triangle();
        let g = sem.graph();
        let mut rng = RngStream::new(3);
        let cate = CausalQuery::cate(1, 1.0, 0.0, 2, 0, 0.5);
        assert!(estimate_ate(&sem, &g, &cate, &AteConfig::default(), &mut rng).is_err());
        let zero = AteConfig {
            n_graphs: 0,
            n_per_graph: 1,
        };
        assert!(estimate_ate(&sem, &g, &CausalQuery::ate(0, 1.0, 0.0, 2), &zero, &mut rng).is_err());
    }

    #[test]
    fn same_seed_same_estimate() {
        let sem = triangle();
        let q = CausalQuery::ate(1, 1.0, -1.0, 2);
        let cfg = AteConfig {
            n_graphs: 4,
            n_per_graph: 100,
        };
        let a = estimate_ate(&sem, &sem.graph(), &q, &cfg, &mut RngStream::new(9)).unwrap();
        let b = estimate_ate(&sem, &sem.graph(), &q, &cfg, &mut RngStream::new(9)).unwrap();
        assert_eq!(a, b);
    }
}
