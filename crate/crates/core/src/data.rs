//! Column-typed tables with optional missing cells.
//!
//! Values are stored as `f64`: continuous values as-is, binary as 0/1,
//! categorical as the class index. Missing cells are `NaN`.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{DeciError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum VariableKind {
    Continuous,
    Binary,
    Categorical { cardinality: usize },
}

impl VariableKind {
    pub fn is_continuous(&self) -> bool {
        matches!(self, VariableKind::Continuous)
    }

    pub fn is_discrete(&self) -> bool {
        !self.is_continuous()
    }

    /// Width of the node's output head.
    pub fn output_width(&self) -> usize {
        match self {
            VariableKind::Categorical { cardinality } => *cardinality,
            _ => 1,
        }
    }

    fn check_value(&self, v: f64) -> bool {
        match self {
            VariableKind::Continuous => v.is_finite(),
            VariableKind::Binary => v == 0.0 || v == 1.0,
            VariableKind::Categorical { cardinality } => {
                v >= 0.0 && v.fract() == 0.0 && (v as usize) < *cardinality
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariableSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: VariableKind,
}

impl VariableSpec {
    pub fn continuous(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: VariableKind::Continuous,
        }
    }

    pub fn binary(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: VariableKind::Binary,
        }
    }

    pub fn categorical(name: impl Into<String>, cardinality: usize) -> Self {
        Self {
            name: name.into(),
            kind: VariableKind::Categorical { cardinality },
        }
    }
}

/// Checks name uniqueness and cardinalities.
pub fn validate_specs(specs: &[VariableSpec]) -> Result<()> {
    for (i, s) in specs.iter().enumerate() {
        if specs[..i].iter().any(|o| o.name == s.name) {
            return Err(DeciError::InvalidData(format!("duplicate variable name `{}`", s.name)));
        }
        if let VariableKind::Categorical { cardinality } = s.kind {
            if cardinality < 2 {
                return Err(DeciError::InvalidData(format!(
                    "categorical variable `{}` needs at least 2 classes",
                    s.name
                )));
            }
        }
    }
    Ok(())
}

/// `Xi` names for `d` continuous variables, 1-based.
pub fn default_specs(d: usize) -> Vec<VariableSpec> {
    (1..=d).map(|i| VariableSpec::continuous(format!("X{i}"))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub variables: Vec<VariableSpec>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub specs: Vec<VariableSpec>,
    pub values: Array2<f64>,
}

impl Dataset {
    pub fn new(specs: Vec<VariableSpec>, values: Array2<f64>) -> Result<Self> {
        validate_specs(&specs)?;
        if values.ncols() != specs.len() {
            return Err(DeciError::ShapeMismatch(format!(
                "{} columns for {} variables",
                values.ncols(),
                specs.len()
            )));
        }
        for ((r, c), v) in values.indexed_iter() {
            if !v.is_nan() && !specs[c].kind.check_value(*v) {
                return Err(DeciError::InvalidData(format!(
                    "row {r}: value {v} is not valid for {} ({:?})",
                    specs[c].name, specs[c].kind
                )));
            }
        }
        Ok(Self { specs, values })
    }

    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_vars(&self) -> usize {
        self.specs.len()
    }

    pub fn has_missing(&self) -> bool {
        self.values.iter().any(|v| v.is_nan())
    }

    /// 1 where the cell is missing.
    pub fn missing_mask(&self) -> Array2<f64> {
        self.values.mapv(|v| if v.is_nan() { 1.0 } else { 0.0 })
    }

    pub fn missing_fraction(&self) -> f64 {
        self.missing_mask().mean().unwrap_or(0.0)
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        column_index(&self.specs, name)
    }

    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            specs: self.specs.clone(),
            values: self.values.select(Axis(0), rows),
        }
    }

    pub fn metadata(&self) -> Metadata {
        Metadata {
            variables: self.specs.clone(),
        }
    }

    /// CSV with a header row; missing cells are empty.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(self.specs.iter().map(|s| s.name.as_str()))?;
        for row in self.values.rows() {
            wr.write_record(row.iter().map(|v| if v.is_nan() { String::new() } else { format!("{v}") }))?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Reads CSV whose header must match `specs` by name and order.
    pub fn read_csv<R: Read>(r: R, specs: Vec<VariableSpec>) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let header: Vec<String> = rd.headers()?.iter().map(|s| s.trim().to_string()).collect();
        let names: Vec<&str> = specs.iter().map(|s| s.name.as_str()).collect();
        if header != names {
            return Err(DeciError::InvalidData(format!(
                "csv header {header:?} does not match metadata {names:?}"
            )));
        }
        let mut flat = Vec::new();
        let mut rows = 0;
        for rec in rd.records() {
            let rec = rec?;
            if rec.len() != specs.len() {
                return Err(DeciError::InvalidData(format!(
                    "row {rows} has {} fields, expected {}",
                    rec.len(),
                    specs.len()
                )));
            }
            for (c, field) in rec.iter().enumerate() {
                let f = field.trim();
                let v = if f.is_empty() || f.eq_ignore_ascii_case("nan") {
                    f64::NAN
                } else {
                    f.parse::<f64>().map_err(|_| {
                        DeciError::InvalidData(format!("row {rows}, column {}: cannot parse `{f}`", names[c]))
                    })?
                };
                flat.push(v);
            }
            rows += 1;
        }
        let values = Array2::from_shape_vec((rows, specs.len()), flat)
            .map_err(|e| DeciError::InvalidData(e.to_string()))?;
        Dataset::new(specs, values)
    }

    /// Reads `data.csv` and `metadata.json` from a dataset directory. Without
    /// metadata every column is taken as continuous.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let csv_path = dir.join("data.csv");
        let meta_path = dir.join("metadata.json");
        let specs = if meta_path.exists() {
            let meta: Metadata = serde_json::from_str(&fs::read_to_string(&meta_path)?)?;
            meta.variables
        } else {
            let mut rd = csv::Reader::from_path(&csv_path)?;
            rd.headers()?
                .iter()
                .map(|h| VariableSpec::continuous(h.trim()))
                .collect()
        };
        Dataset::read_csv(fs::File::open(&csv_path)?, specs)
    }

    pub fn save_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        self.write_csv(fs::File::create(dir.join("data.csv"))?)?;
        let meta = serde_json::to_string_pretty(&self.metadata())?;
        fs::write(dir.join("metadata.json"), meta + "\n")?;
        Ok(())
    }
}

pub fn column_index(specs: &[VariableSpec], name: &str) -> Result<usize> {
    specs
        .iter()
        .position(|s| s.name == name)
        .ok_or_else(|| DeciError::UnknownVariable(name.to_string()))
}
