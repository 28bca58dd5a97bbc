//! Ground-truth packages and the dataset directory layout.
//!
//! A dataset directory holds `data.csv`, `metadata.json`, `graph.csv` (true
//! adjacency, headerless 0/1) and `interventions.json` (test cases with their
//! ground-truth effects).

use std::collections::BTreeMap;
use std::path::Path;

use deci_numerics::RngStream;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::datagen::hmc::{hmc_conditional_samples, HmcConfig};
use crate::datagen::truth::GroundTruthSem;
use crate::error::Result;
use crate::graph::AdjacencyMatrix;
use crate::inference::ate::stacked_targets;
use crate::inference::{CausalQuery, QuerySpec};
use crate::sem::{simulate, ExogenousNoise};

/// Number of interventional draws per arm for ground-truth effects.
pub const GROUND_TRUTH_SAMPLES: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionCase {
    pub treatment: BTreeMap<String, f64>,
    pub reference: BTreeMap<String, f64>,
    pub targets: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub condition: BTreeMap<String, f64>,
    pub ground_truth: Vec<f64>,
    pub ground_truth_stderr: Vec<f64>,
}

impl InterventionCase {
    pub fn query(&self) -> QuerySpec {
        QuerySpec {
            treatment: self.treatment.clone(),
            reference: self.reference.clone(),
            targets: self.targets.clone(),
            condition: self.condition.clone(),
        }
    }

    pub fn is_conditional(&self) -> bool {
        !self.condition.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct InterventionFile {
    pub cases: Vec<InterventionCase>,
}

#[derive(Debug, Clone)]
pub struct GroundTruthPackage {
    pub name: String,
    pub sem: GroundTruthSem,
    pub cases: Vec<InterventionCase>,
}

impl GroundTruthPackage {
    pub fn graph(&self) -> &AdjacencyMatrix {
        &self.sem.graph
    }
}

fn names(sem: &GroundTruthSem, a: &[(usize, f64)]) -> BTreeMap<String, f64> {
    a.iter().map(|(i, v)| (sem.specs[*i].name.clone(), *v)).collect()
}

/// Ground truth for `query`: common-random-number interventional means for
/// unconditional queries, HMC conditional samples otherwise.
pub fn ground_truth_case(
    sem: &GroundTruthSem,
    query: &CausalQuery,
    hmc: &HmcConfig,
    rng: &mut RngStream,
) -> Result<InterventionCase> {
    query.validate(&sem.specs)?;
    let (truth, stderr) = if query.condition.is_empty() {
        let noise = ExogenousNoise::draw(sem, GROUND_TRUTH_SAMPLES, rng);
        let xa = simulate(sem, &sem.graph, &query.treatment, &noise)?;
        let xb = simulate(sem, &sem.graph, &query.reference, &noise)?;
        let diff = stacked_targets(sem, &xa, &sem.graph, &query.targets) - stacked_targets(sem, &xb, &sem.graph, &query.targets);
        crate::inference::ate::mean_and_stderr(&diff)
    } else {
        let a = hmc_conditional_samples(sem, &query.treatment, &query.condition, hmc, rng)?;
        let b = hmc_conditional_samples(sem, &query.reference, &query.condition, hmc, rng)?;
        let ya = stacked_targets(sem, &a.samples, &sem.graph, &query.targets);
        let yb = stacked_targets(sem, &b.samples, &sem.graph, &query.targets);
        let (ma, sa) = crate::inference::ate::mean_and_stderr(&ya);
        let (mb, sb) = crate::inference::ate::mean_and_stderr(&yb);
        (
            ma.iter().zip(&mb).map(|(x, y)| x - y).collect(),
            sa.iter().zip(&sb).map(|(x, y)| (x * x + y * y).sqrt()).collect(),
        )
    };
    Ok(InterventionCase {
        treatment: names(sem, &query.treatment),
        reference: names(sem, &query.reference),
        targets: query.targets.iter().map(|t| sem.specs[*t].name.clone()).collect(),
        condition: names(sem, &query.condition),
        ground_truth: truth,
        ground_truth_stderr: stderr,
    })
}

/// Writes the full dataset directory.
pub fn write_dataset_dir(dir: impl AsRef<Path>, data: &Dataset, package: &GroundTruthPackage) -> Result<()> {
    let dir = dir.as_ref();
    data.save_dir(dir)?;
    package.graph().write_csv(std::fs::File::create(dir.join("graph.csv"))?)?;
    let file = InterventionFile {
        cases: package.cases.clone(),
    };
    std::fs::write(dir.join("interventions.json"), serde_json::to_string_pretty(&file)? + "\n")?;
    Ok(())
}

/// Reads `interventions.json` if present.
pub fn read_interventions(dir: impl AsRef<Path>) -> Result<Option<InterventionFile>> {
    let p = dir.as_ref().join("interventions.json");
    if !p.exists() {
        return Ok(None);
    }
    Ok(Some(serde_json::from_str(&std::fs::read_to_string(p)?)?))
}

/// Reads `graph.csv` if present.
pub fn read_true_graph(dir: impl AsRef<Path>) -> Result<Option<AdjacencyMatrix>> {
    let p = dir.as_ref().join("graph.csv");
    if !p.exists() {
        return Ok(None);
    }
    Ok(Some(AdjacencyMatrix::read_csv(std::fs::File::open(p)?)?))
}
