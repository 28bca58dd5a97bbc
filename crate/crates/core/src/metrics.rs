//! Discovery and effect-estimation metrics.

use deci_numerics::RngStream;
use serde::{Deserialize, Serialize};

use crate::error::{DeciError, Result};
use crate::graph::{AdjacencyMatrix, GraphDistribution};

pub const DEFAULT_METRIC_SAMPLES: usize = 100;

fn same_size(t: &AdjacencyMatrix, p: &AdjacencyMatrix) -> Result<usize> {
    if t.num_nodes() != p.num_nodes() {
        return Err(DeciError::ShapeMismatch(format!(
            "true graph has {} nodes, predicted {}",
            t.num_nodes(),
            p.num_nodes()
        )));
    }
    Ok(t.num_nodes())
}

/// F1 from counts; both sets empty scores 1.
fn f1(tp: usize, n_true: usize, n_pred: usize) -> f64 {
    if n_true == 0 && n_pred == 0 {
        return 1.0;
    }
    2.0 * tp as f64 / (n_true + n_pred) as f64
}

/// F1 over unordered node pairs joined by an edge in either direction.
pub fn adjacency_f1(truth: &AdjacencyMatrix, pred: &AdjacencyMatrix) -> Result<f64> {
    let d = same_size(truth, pred)?;
    let (mut tp, mut nt, mut np) = (0, 0, 0);
    for i in 0..d {
        for j in i + 1..d {
            let a = truth.has_edge(i, j) || truth.has_edge(j, i);
            let b = pred.has_edge(i, j) || pred.has_edge(j, i);
            nt += a as usize;
            np += b as usize;
            tp += (a && b) as usize;
        }
    }
    Ok(f1(tp, nt, np))
}

/// F1 over directed edges; a reversed edge is one false positive and one
/// false negative.
pub fn orientation_f1(truth: &AdjacencyMatrix, pred: &AdjacencyMatrix) -> Result<f64> {
    let d = same_size(truth, pred)?;
    let (mut tp, mut nt, mut np) = (0, 0, 0);
    for i in 0..d {
        for j in 0..d {
            let a = truth.has_edge(i, j);
            let b = pred.has_edge(i, j);
            nt += a as usize;
            np += b as usize;
            tp += (a && b) as usize;
        }
    }
    Ok(f1(tp, nt, np))
}

/// Fraction of ancestor relations of `truth` that are also ancestor
/// relations of `pred`. A truth with no edges scores 1. Cyclic predictions
/// are scored on their reachability.
pub fn causal_accuracy(truth: &AdjacencyMatrix, pred: &AdjacencyMatrix) -> Result<f64> {
    let d = same_size(truth, pred)?;
    let rt = truth.reachability();
    let rp = pred.reachability();
    let (mut total, mut hit) = (0usize, 0usize);
    for i in 0..d {
        for j in 0..d {
            if i != j && rt[i][j] {
                total += 1;
                hit += rp[i][j] as usize;
            }
        }
    }
    Ok(if total == 0 { 1.0 } else { hit as f64 / total as f64 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(v: &[f64]) -> Self {
        let n = v.len().max(1) as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        Self { mean, std: var.sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryReport {
    pub adjacency_f1: MeanStd,
    pub orientation_f1: MeanStd,
    pub causal_accuracy: MeanStd,
    pub n_samples: usize,
    /// Sampled graphs that contained a cycle (still scored).
    pub cyclic_samples: usize,
}

/// Monte Carlo mean and standard deviation of the three discovery metrics
/// over hard samples from `posterior`.
pub fn expected_discovery_metrics(
    truth: &AdjacencyMatrix,
    posterior: &dyn GraphDistribution,
    n_samples: usize,
    rng: &mut RngStream,
) -> Result<DiscoveryReport> {
    let mut adj = Vec::with_capacity(n_samples);
    let mut ori = Vec::with_capacity(n_samples);
    let mut acc = Vec::with_capacity(n_samples);
    let mut cyclic = 0;
    for _ in 0..n_samples {
        let g = posterior.sample_graph(rng);
        cyclic += !g.is_acyclic() as usize;
        adj.push(adjacency_f1(truth, &g)?);
        ori.push(orientation_f1(truth, &g)?);
        acc.push(causal_accuracy(truth, &g)?);
    }
    Ok(DiscoveryReport {
        adjacency_f1: MeanStd::of(&adj),
        orientation_f1: MeanStd::of(&ori),
        causal_accuracy: MeanStd::of(&acc),
        n_samples,
        cyclic_samples: cyclic,
    })
}

/// Metrics of a single graph, reported with zero spread.
pub fn point_discovery_metrics(truth: &AdjacencyMatrix, pred: &AdjacencyMatrix) -> Result<DiscoveryReport> {
    let point = |v| MeanStd { mean: v, std: 0.0 };
    Ok(DiscoveryReport {
        adjacency_f1: point(adjacency_f1(truth, pred)?),
        orientation_f1: point(orientation_f1(truth, pred)?),
        causal_accuracy: point(causal_accuracy(truth, pred)?),
        n_samples: 1,
        cyclic_samples: !pred.is_acyclic() as usize,
    })
}

pub fn rmse(estimates: &[f64], truth: &[f64]) -> Result<f64> {
    if estimates.len() != truth.len() {
        return Err(DeciError::ShapeMismatch(format!(
            "{} estimates for {} ground-truth values",
            estimates.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(DeciError::InvalidData("no test cases".into()));
    }
    let ss: f64 = estimates.iter().zip(truth).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((ss / truth.len() as f64).sqrt())
}

pub fn ate_rmse(estimates: &[f64], truth: &[f64]) -> Result<f64> {
    rmse(estimates, truth)
}

pub fn cate_rmse(estimates: &[f64], truth: &[f64]) -> Result<f64> {
    rmse(estimates, truth)
}
