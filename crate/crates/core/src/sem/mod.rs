//! Structural equation models: the DECI model and the generic simulation,
//! inversion and intervened-density routines shared by every SEM.

pub mod checkpoint;
pub mod model;

use deci_numerics::RngStream;
use ndarray::Array2;

use crate::data::{VariableKind, VariableSpec};
use crate::error::{DeciError, Result};
use crate::graph::AdjacencyMatrix;

pub use checkpoint::Checkpoint;
pub use model::{DeciModel, ModelConfig, NoiseKind, LN_2PI};

/// An SEM whose continuous nodes are `x_i = f_i(x) + z_i` and whose discrete
/// nodes are drawn from logits `f_i(x)`.
pub trait Sem: Sync {
    fn specs(&self) -> &[VariableSpec];

    /// `N × out_i` output of `node` given current values; only the node's
    /// parents in `graph` may be read.
    fn node_output(&self, x: &Array2<f64>, graph: &AdjacencyMatrix, node: usize) -> Array2<f64>;

    /// Maps standard-normal base draws to additive noise of a continuous node.
    fn noise_from_base(&self, node: usize, u: &[f64]) -> Vec<f64>;

    fn noise_log_density(&self, node: usize, z: &[f64]) -> Vec<f64>;

    fn num_nodes(&self) -> usize {
        self.specs().len()
    }
}

/// Exogenous randomness for `n` samples: additive noise for continuous nodes
/// and logistic / Gumbel draws for discrete ones.
#[derive(Debug, Clone, PartialEq)]
pub struct ExogenousNoise {
    pub z: Array2<f64>,
    pub discrete: Vec<Option<Array2<f64>>>,
}

impl ExogenousNoise {
    pub fn draw(sem: &dyn Sem, n: usize, rng: &mut RngStream) -> Self {
        let d = sem.num_nodes();
        let base = Array2::from_shape_fn((n, d), |_| rng.normal());
        let discrete = draw_discrete(sem.specs(), n, rng);
        Self::from_base(sem, &base, discrete)
    }

    pub fn from_base(sem: &dyn Sem, base: &Array2<f64>, discrete: Vec<Option<Array2<f64>>>) -> Self {
        let (n, d) = base.dim();
        let mut z = Array2::zeros((n, d));
        for (i, spec) in sem.specs().iter().enumerate() {
            if spec.kind.is_continuous() {
                let col = sem.noise_from_base(i, &base.column(i).to_vec());
                for (r, v) in col.into_iter().enumerate() {
                    z[[r, i]] = v;
                }
            }
        }
        Self { z, discrete }
    }

    pub fn n(&self) -> usize {
        self.z.nrows()
    }
}

pub fn draw_discrete(specs: &[VariableSpec], n: usize, rng: &mut RngStream) -> Vec<Option<Array2<f64>>> {
    specs
        .iter()
        .map(|s| match s.kind {
            VariableKind::Continuous => None,
            VariableKind::Binary => Some(Array2::from_shape_fn((n, 1), |_| rng.logistic())),
            VariableKind::Categorical { cardinality } => {
                Some(Array2::from_shape_fn((n, cardinality), |_| rng.gumbel()))
            }
        })
        .collect()
}

fn check_assignments(specs: &[VariableSpec], assignments: &[(usize, f64)]) -> Result<()> {
    for &(i, v) in assignments {
        let spec = specs.get(i).ok_or(DeciError::IndexOutOfRange {
            index: i,
            nodes: specs.len(),
        })?;
        let ok = match spec.kind {
            VariableKind::Continuous => v.is_finite(),
            VariableKind::Binary => v == 0.0 || v == 1.0,
            VariableKind::Categorical { cardinality } => v >= 0.0 && v.fract() == 0.0 && (v as usize) < cardinality,
        };
        if !ok {
            return Err(DeciError::InvalidQuery(format!(
                "value {v} is not valid for {} ({:?})",
                spec.name, spec.kind
            )));
        }
    }
    Ok(())
}

/// Ancestral simulation on `graph` mutilated at the assigned nodes, which are
/// clamped to their values.
pub fn simulate(
    sem: &dyn Sem,
    graph: &AdjacencyMatrix,
    assignments: &[(usize, f64)],
    noise: &ExogenousNoise,
) -> Result<Array2<f64>> {
    let specs = sem.specs();
    let d = specs.len();
    if graph.num_nodes() != d || noise.z.ncols() != d {
        return Err(DeciError::ShapeMismatch(format!(
            "graph has {} nodes, noise {} columns, model {d} variables",
            graph.num_nodes(),
            noise.z.ncols()
        )));
    }
    check_assignments(specs, assignments)?;
    let treated: Vec<usize> = assignments.iter().map(|a| a.0).collect();
    let g = graph.mutilate(&treated)?;
    let order = g.topological_order()?;
    let n = noise.n();
    let mut x = Array2::zeros((n, d));
    for &(i, v) in assignments {
        x.column_mut(i).fill(v);
    }
    for i in order {
        if treated.contains(&i) {
            continue;
        }
        let f = sem.node_output(&x, &g, i);
        match specs[i].kind {
            VariableKind::Continuous => {
                for r in 0..n {
                    x[[r, i]] = f[[r, 0]] + noise.z[[r, i]];
                }
            }
            VariableKind::Binary => {
                let l = noise.discrete[i].as_ref().expect("binary noise");
                for r in 0..n {
                    x[[r, i]] = if f[[r, 0]] + l[[r, 0]] > 0.0 { 1.0 } else { 0.0 };
                }
            }
            VariableKind::Categorical { cardinality } => {
                let gmb = noise.discrete[i].as_ref().expect("categorical noise");
                for r in 0..n {
                    let mut best = 0;
                    let mut best_v = f64::NEG_INFINITY;
                    for c in 0..cardinality {
                        let v = f[[r, c]] + gmb[[r, c]];
                        if v > best_v {
                            best_v = v;
                            best = c;
                        }
                    }
                    x[[r, i]] = best as f64;
                }
            }
        }
    }
    Ok(x)
}

pub fn sample_observational(sem: &dyn Sem, graph: &AdjacencyMatrix, n: usize, rng: &mut RngStream) -> Result<Array2<f64>> {
    let noise = ExogenousNoise::draw(sem, n, rng);
    simulate(sem, graph, &[], &noise)
}

pub fn sample_interventional(
    sem: &dyn Sem,
    graph: &AdjacencyMatrix,
    assignments: &[(usize, f64)],
    n: usize,
    rng: &mut RngStream,
) -> Result<Array2<f64>> {
    let noise = ExogenousNoise::draw(sem, n, rng);
    simulate(sem, graph, assignments, &noise)
}

/// Expected value of a target node given its parents: the value itself for
/// continuous nodes, `P(x=1)` for binary, class probabilities for categorical.
pub fn target_expectation(sem: &dyn Sem, x: &Array2<f64>, graph: &AdjacencyMatrix, node: usize) -> Array2<f64> {
    match sem.specs()[node].kind {
        VariableKind::Continuous => x.column(node).to_owned().insert_axis(ndarray::Axis(1)),
        VariableKind::Binary => sem
            .node_output(x, graph, node)
            .mapv(deci_numerics::sigmoid),
        VariableKind::Categorical { .. } => {
            let mut f = sem.node_output(x, graph, node);
            for mut row in f.rows_mut() {
                let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                row.mapv_inplace(|v| (v - m).exp());
                let s = row.sum();
                row.mapv_inplace(|v| v / s);
            }
            f
        }
    }
}

fn require_continuous(specs: &[VariableSpec], nodes: impl Iterator<Item = usize>) -> Result<()> {
    for i in nodes {
        if specs[i].kind.is_discrete() {
            return Err(DeciError::Unsupported(format!(
                "noise inversion is undefined for discrete variable {}",
                specs[i].name
            )));
        }
    }
    Ok(())
}

/// `z_i = x_i − f_i(x)` for a fully continuous model.
pub fn invert_to_noise(sem: &dyn Sem, x: &Array2<f64>, graph: &AdjacencyMatrix) -> Result<Array2<f64>> {
    let d = sem.num_nodes();
    require_continuous(sem.specs(), 0..d)?;
    graph.topological_order()?;
    if x.iter().any(|v| v.is_nan()) {
        return Err(DeciError::InvalidData("inversion needs fully observed values".into()));
    }
    let mut z = x.clone();
    for i in 0..d {
        let f = sem.node_output(x, graph, i);
        for r in 0..x.nrows() {
            z[[r, i]] -= f[[r, 0]];
        }
    }
    Ok(z)
}

/// Per-row `Σ_{i∉T} log p_{z_i}(x_i − f_i(x))` on the mutilated graph, with
/// treated columns replaced by their assigned values.
pub fn intervened_log_density(
    sem: &dyn Sem,
    x: &Array2<f64>,
    assignments: &[(usize, f64)],
    graph: &AdjacencyMatrix,
) -> Result<Vec<f64>> {
    let d = sem.num_nodes();
    check_assignments(sem.specs(), assignments)?;
    let treated: Vec<usize> = assignments.iter().map(|a| a.0).collect();
    require_continuous(sem.specs(), (0..d).filter(|i| !treated.contains(i)))?;
    let g = graph.mutilate(&treated)?;
    g.topological_order()?;
    let mut xs = x.clone();
    for &(i, v) in assignments {
        xs.column_mut(i).fill(v);
    }
    let mut total = vec![0.0; x.nrows()];
    for i in (0..d).filter(|i| !treated.contains(i)) {
        let f = sem.node_output(&xs, &g, i);
        let z: Vec<f64> = (0..x.nrows()).map(|r| xs[[r, i]] - f[[r, 0]]).collect();
        for (t, lp) in total.iter_mut().zip(sem.noise_log_density(i, &z)) {
            *t += lp;
        }
    }
    Ok(total)
}


#[cfg(test)]
mod tests {
    use super::testing::LinearGaussianSem;
    use super::*;
    use crate::data::default_specs;
    use ndarray::array;
    use statrs::distribution::{ContinuousCDF, Normal};

    fn ks_statistic_normal(xs: &[f64]) -> f64 {
        let mut v = xs.to_vec();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = v.len() as f64;
        let norm = Normal::new(0.0, 1.0).unwrap();
        v.iter()
            .enumerate()
            .map(|(i, x)| {
                let c = norm.cdf(*x);
                (c - i as f64 / n).abs().max(((i + 1) as f64 / n - c).abs())
            })
            .fold(0.0, f64::max)
    }

    fn chain_half() -> LinearGaussianSem {
        LinearGaussianSem::new(array![[0.0, 0.5], [0.0, 0.0]], vec![1.0, 1.0])
    }

    #[test]
    fn zero_model_samples_are_standard_normal() {
        let mut rng = RngStream::new(0);
        let m = DeciModel::new(
            default_specs(2),
            ModelConfig {
                noise: NoiseKind::Gaussian,
                hidden_dim: 4,
                ..ModelConfig::default()
            },
            &mut rng,
        )
        .unwrap();
        let g = AdjacencyMatrix::from_edges(2, &[(0, 1)]).unwrap();
        let x = sample_observational(&m, &g, 10_000, &mut rng).unwrap();
        let crit = 1.628 / (10_000f64).sqrt(); // alpha = 0.01
        for c in 0..2 {
            assert!(ks_statistic_normal(&x.column(c).to_vec()) < crit);
        }
    }

    #[test]
    fn fixed_noise_substitution_and_inversion() {
        let sem = chain_half();
        let g = sem.graph();
        let noise = ExogenousNoise {
            z: array![[1.0, 0.0]],
            discrete: vec![None, None],
        };
        let x = simulate(&sem, &g, &[], &noise).unwrap();
        assert_eq!(x, array![[1.0, 0.5]]);
        assert_eq!(invert_to_noise(&sem, &x, &g).unwrap(), array![[1.0, 0.0]]);
    }

    #[test]
    fn do_root_of_chain_shifts_mean() {
        let sem = chain_half();
        let mut rng = RngStream::new(1);
        let n = 20_000;
        let x = sample_interventional(&sem, &sem.graph(), &[(0, 2.0)], n, &mut rng).unwrap();
        let mean = x.column(1).mean().unwrap();
        assert!((mean - 1.0).abs() < 3.0 / (n as f64).sqrt());
        assert!(x.column(0).iter().all(|v| *v == 2.0));
    }

    #[test]
    fn do_on_sink_leaves_others_and_do_all_is_constant() {
        let sem = chain_half();
        let g = sem.graph();
        let mut rng = RngStream::new(2);
        let noise = ExogenousNoise::draw(&sem, 100, &mut rng);
        let obs = simulate(&sem, &g, &[], &noise).unwrap();
        let int = simulate(&sem, &g, &[(1, 7.0)], &noise).unwrap();
        assert_eq!(obs.column(0), int.column(0));
        let all = simulate(&sem, &g, &[(0, 1.0), (1, -1.0)], &noise).unwrap();
        assert!(all.rows().into_iter().all(|r| r[0] == 1.0 && r[1] == -1.0));
    }

    #[test]
    fn cyclic_graph_rejected() {
        let sem = chain_half();
        let cyc = AdjacencyMatrix::from_edges(2, &[(0, 1), (1, 0)]).unwrap();
        let mut rng = RngStream::new(3);
        assert!(matches!(
            sample_observational(&sem, &cyc, 5, &mut rng),
            Err(DeciError::CyclicGraph)
        ));
    }

    #[test]
    fn invalid_assignment_rejected() {
        let mut rng = RngStream::new(4);
        let specs = vec![VariableSpec::categorical("c", 3), VariableSpec::continuous("y")];
        let m = DeciModel::new(specs, ModelConfig { hidden_dim: 4, ..Default::default() }, &mut rng).unwrap();
        let g = AdjacencyMatrix::from_edges(2, &[(0, 1)]).unwrap();
        assert!(sample_interventional(&m, &g, &[(0, 3.0)], 3, &mut rng).is_err());
        assert!(sample_interventional(&m, &g, &[(0, 2.0)], 3, &mut rng).is_ok());
        assert!(invert_to_noise(&m, &array![[0.0, 1.0]], &g).is_err());
    }

    #[test]
    fn round_trip_on_random_continuous_models() {
        let mut rng = RngStream::new(5);
        for noise in [NoiseKind::Gaussian, NoiseKind::Spline] {
            let m = DeciModel::new(
                default_specs(4),
                ModelConfig {
                    noise,
                    hidden_dim: 8,
                    ..Default::default()
                },
                &mut rng,
            )
            .unwrap();
            let m = crate::sem::model::tests_support::randomized(m, &mut rng);
            let g = AdjacencyMatrix::from_edges(4, &[(0, 1), (1, 2), (0, 3), (2, 3)]).unwrap();
            let drawn = ExogenousNoise::draw(&m, 50, &mut rng);
            let x = simulate(&m, &g, &[], &drawn).unwrap();
            let z = invert_to_noise(&m, &x, &g).unwrap();
            for (a, b) in z.iter().zip(drawn.z.iter()) {
                assert!((a - b).abs() < 1e-10);
            }
            let again = simulate(
                &m,
                &g,
                &[],
                &ExogenousNoise {
                    z,
                    discrete: vec![None; 4],
                },
            )
            .unwrap();
            for (a, b) in again.iter().zip(x.iter()) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn intervened_density_examples() {
        let mut rng = RngStream::new(6);
        let m = DeciModel::new(
            default_specs(3),
            ModelConfig {
                noise: NoiseKind::Gaussian,
                hidden_dim: 4,
                ..Default::default()
            },
            &mut rng,
        )
        .unwrap();
        let g = AdjacencyMatrix::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let lp = intervened_log_density(&m, &Array2::zeros((1, 3)), &[(0, 1.5)], &g).unwrap();
        assert!((lp[0] + LN_2PI).abs() < 1e-12);

        // do on a root equals the conditional density given the root
        let sem = LinearGaussianSem::new(array![[0.0, 0.8, 0.0], [0.0, 0.0, -0.5], [0.0, 0.0, 0.0]], vec![1.0, 0.7, 1.3]);
        let x = array![[0.4, -0.2, 1.1]];
        let by_do = intervened_log_density(&sem, &x, &[(0, 0.4)], &sem.graph()).unwrap()[0];
        let z1 = -0.2 - 0.8 * 0.4;
        let z2 = 1.1 + 0.5 * -0.2;
        let cond = sem.noise_log_density(1, &[z1])[0] + sem.noise_log_density(2, &[z2])[0];
        assert!((by_do - cond).abs() < 1e-12);
    }

    #[test]
    fn intervened_density_integrates_to_one() {
        let mut rng = RngStream::new(7);
        for noise in [NoiseKind::Gaussian, NoiseKind::Spline] {
            let m = DeciModel::new(
                default_specs(2),
                ModelConfig {
                    noise,
                    hidden_dim: 8,
                    ..Default::default()
                },
                &mut rng,
            )
            .unwrap();
            let m = crate::sem::model::tests_support::randomized(m, &mut rng);
            let g = AdjacencyMatrix::from_edges(2, &[(0, 1)]).unwrap();
            let k = 20_000;
            let h = 20.0 / k as f64;
            let grid = Array2::from_shape_fn((k + 1, 2), |(r, c)| if c == 1 { -10.0 + h * r as f64 } else { 0.0 });
            let lp = intervened_log_density(&m, &grid, &[(0, 0.8)], &g).unwrap();
            let p: Vec<f64> = lp.iter().map(|v| v.exp()).collect();
            let integral: f64 = p.windows(2).map(|w| 0.5 * h * (w[0] + w[1])).sum();
            assert!((integral - 1.0).abs() < 1e-3, "{noise:?}: {integral}");
        }
    }
}
