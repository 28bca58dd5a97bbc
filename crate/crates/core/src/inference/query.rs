//! Causal queries and effect results.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{column_index, VariableKind, VariableSpec};
use crate::error::{DeciError, Result};

/// Query as stored on disk: variables are addressed by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuerySpec {
    pub treatment: BTreeMap<String, f64>,
    pub reference: BTreeMap<String, f64>,
    pub targets: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub condition: BTreeMap<String, f64>,
}

impl QuerySpec {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| DeciError::InvalidQuery(format!("malformed query: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn resolve(&self, specs: &[VariableSpec]) -> Result<CausalQuery> {
        let assign = |m: &BTreeMap<String, f64>| -> Result<Vec<(usize, f64)>> {
            m.iter().map(|(k, v)| Ok((column_index(specs, k)?, *v))).collect()
        };
        let q = CausalQuery {
            treatment: assign(&self.treatment)?,
            reference: assign(&self.reference)?,
            targets: self
                .targets
                .iter()
                .map(|t| column_index(specs, t))
                .collect::<Result<_>>()?,
            condition: assign(&self.condition)?,
        };
        q.validate(specs)?;
        Ok(q)
    }
}

/// Query over column indices: `do(x_T = a)` versus `do(x_T = b)` on `x_Y`,
/// optionally conditioned on `x_C = c`.
#[derive(Debug, Clone, PartialEq)]
pub struct CausalQuery {
    pub treatment: Vec<(usize, f64)>,
    pub reference: Vec<(usize, f64)>,
    pub targets: Vec<usize>,
    pub condition: Vec<(usize, f64)>,
}

fn value_ok(kind: &VariableKind, v: f64) -> bool {
    match kind {
        VariableKind::Continuous => v.is_finite(),
        VariableKind::Binary => v == 0.0 || v == 1.0,
        VariableKind::Categorical { cardinality } => v >= 0.0 && v.fract() == 0.0 && (v as usize) < *cardinality,
    }
}

impl CausalQuery {
    pub fn ate(treatment: usize, a: f64, b: f64, target: usize) -> Self {
        Self {
            treatment: vec![(treatment, a)],
            reference: vec![(treatment, b)],
            targets: vec![target],
            condition: Vec::new(),
        }
    }

    pub fn cate(treatment: usize, a: f64, b: f64, target: usize, condition: usize, c: f64) -> Self {
        Self {
            condition: vec![(condition, c)],
            ..Self::ate(treatment, a, b, target)
        }
    }

    pub fn treatment_nodes(&self) -> Vec<usize> {
        self.treatment.iter().map(|t| t.0).collect()
    }

    pub fn validate(&self, specs: &[VariableSpec]) -> Result<()> {
        let d = specs.len();
        let all = self
            .treatment
            .iter()
            .chain(&self.reference)
            .chain(&self.condition)
            .map(|a| a.0)
            .chain(self.targets.iter().copied());
        for i in all {
            if i >= d {
                return Err(DeciError::IndexOutOfRange { index: i, nodes: d });
            }
        }
        if self.treatment.is_empty() {
            return Err(DeciError::InvalidQuery("no treatment variables".into()));
        }
        if self.targets.is_empty() {
            return Err(DeciError::InvalidQuery("no target variables".into()));
        }
        let mut t: Vec<usize> = self.treatment_nodes();
        let mut r: Vec<usize> = self.reference.iter().map(|a| a.0).collect();
        t.sort_unstable();
        r.sort_unstable();
        if t != r {
            return Err(DeciError::InvalidQuery("treatment and reference must assign the same variables".into()));
        }
        if t.windows(2).any(|w| w[0] == w[1]) {
            return Err(DeciError::InvalidQuery("treatment assigns a variable twice".into()));
        }
        let c: Vec<usize> = self.condition.iter().map(|a| a.0).collect();
        for (a, b, what) in [(&t, &c, "treatment and condition"), (&t, &self.targets, "treatment and targets"), (&c, &self.targets, "condition and targets")] {
            if let Some(i) = a.iter().find(|i| b.contains(i)) {
                return Err(DeciError::InvalidQuery(format!("{what} overlap at {}", specs[*i].name)));
            }
        }
        for &(i, v) in self.treatment.iter().chain(&self.reference).chain(&self.condition) {
            if !value_ok(&specs[i].kind, v) {
                return Err(DeciError::InvalidQuery(format!("value {v} is not valid for {}", specs[i].name)));
            }
        }
        Ok(())
    }

    /// Output labels: one per continuous/binary target, one per class of a
    /// categorical target.
    pub fn labels(&self, specs: &[VariableSpec]) -> Vec<String> {
        let mut out = Vec::new();
        for &t in &self.targets {
            match specs[t].kind {
                VariableKind::Categorical { cardinality } => {
                    out.extend((0..cardinality).map(|k| format!("{}={k}", specs[t].name)));
                }
                _ => out.push(specs[t].name.clone()),
            }
        }
        out
    }
}

/// Effect estimate with Monte Carlo standard errors, one entry per label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectEstimate {
    pub estimate: Vec<f64>,
    pub stderr: Vec<f64>,
    pub labels: Vec<String>,
    pub n_graphs_used: usize,
    pub warnings: Vec<String>,
}

impl EffectEstimate {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
