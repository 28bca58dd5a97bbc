//! Random additive-noise models on ER / SF graphs.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use deci_numerics::{spline::SplineKnots, RngStream};
use serde::{Deserialize, Serialize};

use crate::data::{default_specs, Dataset};
use crate::datagen::graphs::{sample_er_graph, sample_sf_graph};
use crate::datagen::hmc::HmcConfig;
use crate::datagen::package::{ground_truth_case, GroundTruthPackage};
use crate::datagen::truth::{GroundTruthSem, MlpNoise, NodeEquation, NoiseDist};
use crate::error::{DeciError, Result};
use crate::graph::AdjacencyMatrix;
use crate::inference::CausalQuery;

pub const SPLINE_BINS: usize = 8;
pub const SPLINE_BOUND: f64 = 3.0;
pub const MAX_CASES: usize = 5;
pub const MAX_TREATMENT_HOPS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphFamily {
    Er,
    Sf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseFamily {
    Gaussian,
    Mlp,
}

impl FromStr for GraphFamily {
    type Err = DeciError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "er" => Ok(Self::Er),
            "sf" => Ok(Self::Sf),
            _ => Err(DeciError::InvalidData(format!("unknown graph family `{s}` (er, sf)"))),
        }
    }
}

impl FromStr for NoiseFamily {
    type Err = DeciError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" => Ok(Self::Gaussian),
            "mlp" => Ok(Self::Mlp),
            _ => Err(DeciError::InvalidData(format!("unknown noise family `{s}` (gaussian, mlp)"))),
        }
    }
}

impl fmt::Display for GraphFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Er => "ER",
            Self::Sf => "SF",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub family: GraphFamily,
    pub d: usize,
    pub e: usize,
    pub noise: NoiseFamily,
    pub n: usize,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(family: GraphFamily, d: usize, e: usize, noise: NoiseFamily, seed: u64) -> Self {
        Self {
            family,
            d,
            e,
            noise,
            n: 5000,
            seed,
        }
    }

    pub fn name(&self) -> String {
        let noise = match self.noise {
            NoiseFamily::Gaussian => "gaussian",
            NoiseFamily::Mlp => "mlp",
        };
        format!("{}({},{})_{noise}_seed{}", self.family, self.d, self.e, self.seed)
    }

    pub fn sample_graph(&self, rng: &mut RngStream) -> Result<AdjacencyMatrix> {
        match self.family {
            GraphFamily::Er => sample_er_graph(self.d, self.e, rng),
            GraphFamily::Sf => sample_sf_graph(self.d, self.e, rng),
        }
    }
}

/// A random monotone spline with uniform knots, random heights and
/// log-normal knot derivatives, possibly reflected.
pub fn random_spline(rng: &mut RngStream) -> (SplineKnots, f64) {
    let k = SPLINE_BINS;
    let mut raw = vec![0.0; 3 * k - 1];
    for h in &mut raw[k..2 * k] {
        *h = rng.normal();
    }
    for d in &mut raw[2 * k..] {
        // inverse softplus of a log-normal derivative
        let target = (0.5 * rng.normal()).exp();
        *d = target + (-(-target).exp()).ln_1p();
    }
    let sign = if rng.bernoulli(0.5) { 1.0 } else { -1.0 };
    (SplineKnots::from_raw(&raw, k, SPLINE_BOUND), sign)
}

/// Builds the random ANM on `graph`: each node is a random spline of the sum
/// of its parents plus noise from the spec's family. Roots have zero mean.
pub fn anm_sem(graph: &AdjacencyMatrix, spec: &SyntheticSpec, rng: &mut RngStream) -> Result<GroundTruthSem> {
    graph.topological_order()?;
    let d = graph.num_nodes();
    let mut equations = Vec::with_capacity(d);
    for i in 0..d {
        let noise = match spec.noise {
            NoiseFamily::Gaussian => NoiseDist::Normal { scale: 1.0 },
            NoiseFamily::Mlp => NoiseDist::Mlp(MlpNoise::random(16, rng)),
        };
        let parents = graph.parents(i);
        if parents.is_empty() {
            equations.push(NodeEquation::root(noise));
            continue;
        }
        let (knots, sign) = random_spline(rng);
        equations.push(NodeEquation::additive(
            move |x| sign * knots.forward(parents.iter().map(|p| x[*p]).sum()).0,
            noise,
        ));
    }
    GroundTruthSem::new(default_specs(d), graph.clone(), equations)
}

/// Picks up to five test cases: the effect is the latest unused node in
/// causal order that has parents; the treatment is found by walking one to
/// three random parent steps back from it. Treatment values are the
/// observational mean ± one standard deviation.
pub fn choose_cases(sem: &GroundTruthSem, data: &Dataset, rng: &mut RngStream) -> Result<Vec<CausalQuery>> {
    let order = sem.graph.topological_order()?;
    let mut used = BTreeSet::new();
    let mut out = Vec::new();
    for &effect in order.iter().rev() {
        if out.len() == MAX_CASES {
            break;
        }
        if sem.graph.parents(effect).is_empty() || used.contains(&effect) {
            continue;
        }
        let hops = 1 + rng.index(MAX_TREATMENT_HOPS);
        let mut t = effect;
        for _ in 0..hops {
            let p = sem.graph.parents(t);
            if p.is_empty() {
                break;
            }
            t = p[rng.index(p.len())];
        }
        used.insert(effect);
        let col = data.values.column(t);
        let n = col.len() as f64;
        let mean = col.sum() / n;
        let sd = (col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
        out.push(CausalQuery::ate(t, mean + sd, mean - sd, effect));
    }
    Ok(out)
}

/// Samples `spec.n` rows from `sem` and computes ground truth for `queries`
/// (or for automatically chosen cases when `None`).
pub fn build_package(
    name: &str,
    sem: GroundTruthSem,
    n: usize,
    queries: Option<Vec<CausalQuery>>,
    rng: &mut RngStream,
) -> Result<(Dataset, GroundTruthPackage)> {
    let x = sem.sample(n, rng)?;
    let data = Dataset::new(sem.specs.clone(), x)?;
    let queries = match queries {
        Some(q) => q,
        None => choose_cases(&sem, &data, rng)?,
    };
    let hmc = HmcConfig::default();
    let cases = queries
        .iter()
        .map(|q| ground_truth_case(&sem, q, &hmc, rng))
        .collect::<Result<Vec<_>>>()?;
    Ok((
        data,
        GroundTruthPackage {
            name: name.to_string(),
            sem,
            cases,
        },
    ))
}

pub fn simulate_anm(graph: &AdjacencyMatrix, spec: &SyntheticSpec, rng: &mut RngStream) -> Result<(Dataset, GroundTruthPackage)> {
    let sem = anm_sem(graph, spec, rng)?;
    build_package(&spec.name(), sem, spec.n, None, rng)
}

/// Graph, equations and data all from `spec.seed`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(Dataset, GroundTruthPackage)> {
    let root = RngStream::new(spec.seed);
    let g = spec.sample_graph(&mut root.substream(0))?;
    simulate_anm(&g, spec, &mut root.substream(1))
}
