//! Ground-truth SEMs built from explicit structural equations.

use std::sync::Arc;

use deci_numerics::{softplus, RngStream};
use ndarray::Array2;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::data::{VariableKind, VariableSpec};
use crate::error::{DeciError, Result};
use crate::graph::AdjacencyMatrix;
use crate::sem::{Sem, LN_2PI};

/// Mean function of an additive node, reading its parents from a full row.
pub type MeanFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
/// Class probabilities of a discrete node (two entries for binary nodes).
pub type ProbFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("valid")
}

/// Noise obtained by a monotone or learned map of a standard-normal base draw.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseDist {
    Normal { scale: f64 },
    /// `scale · (Exp(1) − 1)`.
    ShiftedExp { scale: f64 },
    /// `scale · (softplus(u) − 1)` with `u ~ N(0, 1)`.
    Softplus { scale: f64 },
    /// Laplace with unit variance times `scale`.
    Laplace { scale: f64 },
    /// Uniform on `[−half_width, half_width]`.
    Uniform { half_width: f64 },
    /// Standard normal pushed through a random tanh MLP, then standardized.
    Mlp(MlpNoise),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpNoise {
    pub w_in: Vec<f64>,
    pub b_in: Vec<f64>,
    pub w_out: Vec<f64>,
    pub mean: f64,
    pub sd: f64,
}

impl MlpNoise {
    pub fn random(hidden: usize, rng: &mut RngStream) -> Self {
        let w_in = rng.normal_vec(hidden);
        let b_in = rng.normal_vec(hidden);
        let w_out: Vec<f64> = rng.normal_vec(hidden).iter().map(|v| v / (hidden as f64).sqrt()).collect();
        let mut m = Self {
            w_in,
            b_in,
            w_out,
            mean: 0.0,
            sd: 1.0,
        };
        let draws: Vec<f64> = (0..100_000).map(|_| m.raw(rng.normal())).collect();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        let var = draws.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / draws.len() as f64;
        m.mean = mean;
        m.sd = var.sqrt().max(1e-12);
        m
    }

    fn raw(&self, u: f64) -> f64 {
        self.w_in
            .iter()
            .zip(&self.b_in)
            .zip(&self.w_out)
            .map(|((a, b), c)| c * (a * u + b).tanh())
            .sum()
    }

    pub fn apply(&self, u: f64) -> f64 {
        (self.raw(u) - self.mean) / self.sd
    }
}

impl NoiseDist {
    pub fn from_base(&self, u: f64) -> f64 {
        let n = std_normal();
        match self {
            NoiseDist::Normal { scale } => scale * u,
            NoiseDist::ShiftedExp { scale } => scale * (-n.sf(u).ln() - 1.0),
            NoiseDist::Softplus { scale } => scale * (softplus(u) - 1.0),
            NoiseDist::Laplace { scale } => {
                let b = std::f64::consts::FRAC_1_SQRT_2;
                let p = n.cdf(u);
                let v = if p < 0.5 { b * (2.0 * p).ln() } else { -b * (2.0 * n.sf(u)).ln() };
                scale * v
            }
            NoiseDist::Uniform { half_width } => half_width * (2.0 * n.cdf(u) - 1.0),
            NoiseDist::Mlp(m) => m.apply(u),
        }
    }

    /// Log density; `None` when it has no closed form (MLP noise).
    pub fn log_density(&self, z: f64) -> Option<f64> {
        Some(match self {
            NoiseDist::Normal { scale } => -0.5 * (LN_2PI + (z / scale).powi(2)) - scale.ln(),
            NoiseDist::ShiftedExp { scale } => {
                let e = z / scale + 1.0;
                if e < 0.0 {
                    f64::NEG_INFINITY
                } else {
                    -e - scale.ln()
                }
            }
            NoiseDist::Softplus { scale } => {
                let s = z / scale + 1.0;
                if s <= 0.0 {
                    f64::NEG_INFINITY
                } else {
                    // u = softplus⁻¹(s), du/dz = 1 / (scale · σ(u)) = 1 / (scale · (1 − e^{−s}))
                    let u = s + (-(-s).exp()).ln_1p();
                    std_normal().ln_pdf(u) - scale.ln() - (-(-s).exp()).ln_1p()
                }
            }
            NoiseDist::Laplace { scale } => {
                let b = scale * std::f64::consts::FRAC_1_SQRT_2;
                -(2.0 * b).ln() - z.abs() / b
            }
            NoiseDist::Uniform { half_width } => {
                if z.abs() <= *half_width {
                    -(2.0 * half_width).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            NoiseDist::Mlp(_) => return None,
        })
    }
}

#[derive(Clone)]
pub enum NodeEquation {
    Additive { f: MeanFn, noise: NoiseDist },
    Discrete { probs: ProbFn },
}

impl std::fmt::Debug for NodeEquation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NodeEquation::Additive { noise, .. } => write!(f, "Additive({noise:?})"),
            NodeEquation::Discrete { .. } => write!(f, "Discrete"),
        }
    }
}

impl NodeEquation {
    pub fn additive(f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static, noise: NoiseDist) -> Self {
        NodeEquation::Additive { f: Arc::new(f), noise }
    }

    pub fn root(noise: NoiseDist) -> Self {
        Self::additive(|_| 0.0, noise)
    }

    pub fn discrete(probs: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        NodeEquation::Discrete { probs: Arc::new(probs) }
    }
}

/// An SEM with hand-written equations on a known DAG. Equations read only
/// the true parents of their node.
#[derive(Debug, Clone)]
pub struct GroundTruthSem {
    pub specs: Vec<VariableSpec>,
    pub graph: AdjacencyMatrix,
    pub equations: Vec<NodeEquation>,
}

impl GroundTruthSem {
    pub fn new(specs: Vec<VariableSpec>, graph: AdjacencyMatrix, equations: Vec<NodeEquation>) -> Result<Self> {
        crate::data::validate_specs(&specs)?;
        if graph.num_nodes() != specs.len() || equations.len() != specs.len() {
            return Err(DeciError::ShapeMismatch("specs, graph and equations disagree in size".into()));
        }
        graph.topological_order()?;
        for (s, e) in specs.iter().zip(&equations) {
            let ok = matches!(
                (&s.kind, e),
                (VariableKind::Continuous, NodeEquation::Additive { .. })
                    | (VariableKind::Binary | VariableKind::Categorical { .. }, NodeEquation::Discrete { .. })
            );
            if !ok {
                return Err(DeciError::InvalidData(format!("equation type does not match variable {}", s.name)));
            }
        }
        Ok(Self { specs, graph, equations })
    }

    pub fn noise_dist(&self, node: usize) -> Option<&NoiseDist> {
        match &self.equations[node] {
            NodeEquation::Additive { noise, .. } => Some(noise),
            NodeEquation::Discrete { .. } => None,
        }
    }

    pub fn sample(&self, n: usize, rng: &mut RngStream) -> Result<Array2<f64>> {
        crate::sem::sample_observational(self, &self.graph, n, rng)
    }
}

impl Sem for GroundTruthSem {
    fn specs(&self) -> &[VariableSpec] {
        &self.specs
    }

    fn node_output(&self, x: &Array2<f64>, _graph: &AdjacencyMatrix, node: usize) -> Array2<f64> {
        let n = x.nrows();
        match &self.equations[node] {
            NodeEquation::Additive { f, .. } => {
                Array2::from_shape_fn((n, 1), |(r, _)| f(x.row(r).as_slice().expect("row-major")))
            }
            NodeEquation::Discrete { probs } => {
                let binary = matches!(self.specs[node].kind, VariableKind::Binary);
                let k = self.specs[node].kind.output_width();
                let mut out = Array2::zeros((n, k));
                for r in 0..n {
                    let p = probs(x.row(r).as_slice().expect("row-major"));
                    if binary {
                        out[[r, 0]] = p[1].ln() - p[0].ln();
                    } else {
                        for c in 0..k {
                            out[[r, c]] = p[c].ln();
                        }
                    }
                }
                out
            }
        }
    }

    fn noise_from_base(&self, node: usize, u: &[f64]) -> Vec<f64> {
        let d = self.noise_dist(node).expect("continuous node");
        u.iter().map(|v| d.from_base(*v)).collect()
    }

    fn noise_log_density(&self, node: usize, z: &[f64]) -> Vec<f64> {
        let d = self.noise_dist(node).expect("continuous node");
        z.iter().map(|v| d.log_density(*v).unwrap_or(f64::NAN)).collect()
    }
}
