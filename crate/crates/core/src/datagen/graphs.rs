//! Random DAG generators.

use deci_numerics::RngStream;

use crate::error::{DeciError, Result};
use crate::graph::AdjacencyMatrix;

fn check_counts(d: usize, e: usize) -> Result<()> {
    let max = d * d.saturating_sub(1) / 2;
    if e > max {
        return Err(DeciError::InvalidData(format!("{e} edges exceed the {max} possible on {d} nodes")));
    }
    Ok(())
}

/// Erdős–Rényi: `e` distinct pairs chosen uniformly, oriented along a random
/// permutation.
pub fn sample_er_graph(d: usize, e: usize, rng: &mut RngStream) -> Result<AdjacencyMatrix> {
    check_counts(d, e)?;
    let order = rng.permutation(d);
    let mut rank = vec![0; d];
    for (k, &node) in order.iter().enumerate() {
        rank[node] = k;
    }
    let mut pairs = Vec::with_capacity(d * d.saturating_sub(1) / 2);
    for i in 0..d {
        for j in i + 1..d {
            pairs.push((i, j));
        }
    }
    // partial Fisher-Yates
    for k in 0..e {
        let pick = k + rng.index(pairs.len() - k);
        pairs.swap(k, pick);
    }
    let mut g = AdjacencyMatrix::empty(d);
    for &(i, j) in &pairs[..e] {
        if rank[i] < rank[j] {
            g.set_edge(i, j, true);
        } else {
            g.set_edge(j, i, true);
        }
    }
    Ok(g)
}

/// Scale-free: nodes arrive one at a time and attach to earlier nodes with
/// probability proportional to degree + 1; each new node's edges point to the
/// nodes it attaches to. Node labels are randomly permuted at the end.
pub fn sample_sf_graph(d: usize, e: usize, rng: &mut RngStream) -> Result<AdjacencyMatrix> {
    check_counts(d, e)?;
    if d == 0 {
        return Ok(AdjacencyMatrix::empty(0));
    }
    // edges contributed by node i (at most i), summing to e
    let mut quota: Vec<usize> = (0..d).map(|i| if i == 0 { 0 } else { (e / (d - 1)).min(i) }).collect();
    let mut left = e - quota.iter().sum::<usize>();
    while left > 0 {
        for i in (1..d).rev() {
            if left > 0 && quota[i] < i {
                quota[i] += 1;
                left -= 1;
            }
        }
    }
    let mut degree = vec![0usize; d];
    let mut edges = Vec::with_capacity(e);
    for i in 1..d {
        let mut chosen: Vec<usize> = Vec::with_capacity(quota[i]);
        while chosen.len() < quota[i] {
            let weights: Vec<f64> = (0..i)
                .map(|j| if chosen.contains(&j) { 0.0 } else { degree[j] as f64 + 1.0 })
                .collect();
            chosen.push(rng.categorical(&weights));
        }
        for &j in &chosen {
            degree[i] += 1;
            degree[j] += 1;
            edges.push((i, j));
        }
    }
    let relabel = rng.permutation(d);
    let edges: Vec<(usize, usize)> = edges.into_iter().map(|(a, b)| (relabel[a], relabel[b])).collect();
    AdjacencyMatrix::from_edges(d, &edges)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::dag_penalty;

    #[test]
    fn exact_edge_counts_and_acyclic() {
        let mut rng = RngStream::new(1);
        for (d, e) in [(5, 0), (5, 10), (16, 16), (16, 40), (64, 256)] {
            for sampler in [sample_er_graph, sample_sf_graph] {
                let g = sampler(d, e, &mut rng).unwrap();
                assert_eq!(g.num_edges(), e);
                assert!(g.is_acyclic());
                assert!(dag_penalty(&g.to_matrix()).unwrap().abs() < 1e-10);
            }
        }
        assert!(sample_er_graph(4, 7, &mut rng).is_err());
        assert!(sample_sf_graph(4, 7, &mut rng).is_err());
    }

    #[test]
    fn same_seed_same_graph() {
        let a = sample_sf_graph(20, 40, &mut RngStream::new(3)).unwrap();
        let b = sample_sf_graph(20, 40, &mut RngStream::new(3)).unwrap();
        assert_eq!(a, b);
    }
}
