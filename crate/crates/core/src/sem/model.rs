//! The DECI structural equation model.
//!
//! `f_i(x) = ζ(u_i, Σ_j W[j,i] · ℓ(u_j, x_j))` with node embeddings `u`, and
//! shared MLPs `ℓ` and `ζ`. Continuous nodes add Gaussian or spline-flow noise;
//! binary and categorical nodes read `f_i` as logits.

use deci_numerics::spline::{identity_raw, raw_len, rq_spline_columns, SplineKnots, DEFAULT_BOUND};
use deci_numerics::{Bound, CustomOp, MlpBlock, ParamId, ParamStore, RngStream, Tape, Var};
use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use crate::data::{validate_specs, VariableKind, VariableSpec};
use crate::error::{DeciError, Result};
use crate::graph::AdjacencyMatrix;
use crate::sem::Sem;

pub const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    Gaussian,
    Spline,
}

impl std::str::FromStr for NoiseKind {
    type Err = DeciError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(NoiseKind::Gaussian),
            "spline" => Ok(NoiseKind::Spline),
            other => Err(DeciError::Config(format!("noise must be gaussian or spline, got `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub noise: NoiseKind,
    pub hidden_dim: usize,
    /// `None` means one dimension per node.
    pub embedding_dim: Option<usize>,
    pub spline_bins: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            noise: NoiseKind::Spline,
            hidden_dim: 128,
            embedding_dim: None,
            spline_bins: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum NoiseParams {
    Gaussian { log_var: ParamId },
    Spline { raw: ParamId },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeciModel {
    pub specs: Vec<VariableSpec>,
    pub config: ModelConfig,
    pub params: ParamStore,
    embeddings: ParamId,
    ell: MlpBlock,
    zeta: MlpBlock,
    noise: NoiseParams,
    kmax: usize,
}

impl DeciModel {
    pub fn new(specs: Vec<VariableSpec>, config: ModelConfig, rng: &mut RngStream) -> Result<Self> {
        validate_specs(&specs)?;
        if specs.is_empty() {
            return Err(DeciError::InvalidData("model needs at least one variable".into()));
        }
        let d = specs.len();
        let e = config.embedding_dim.unwrap_or(d);
        let h = config.hidden_dim;
        let kmax = specs
            .iter()
            .map(|s| match s.kind {
                VariableKind::Categorical { cardinality } => cardinality,
                _ => 0,
            })
            .max()
            .unwrap_or(0);
        let out = kmax.max(1);
        let mut params = ParamStore::new();
        let embeddings = params.add("embeddings", Array2::from_shape_fn((d, e), |_| rng.normal()));
        let ell = MlpBlock::new(&mut params, "ell", e + 1 + kmax, h, h, false, rng);
        let zeta = MlpBlock::new(&mut params, "zeta", e + h, h, out, true, rng);
        let noise = match config.noise {
            NoiseKind::Gaussian => NoiseParams::Gaussian {
                log_var: params.add("noise.log_var", Array2::zeros((1, d))),
            },
            NoiseKind::Spline => {
                let row = identity_raw(config.spline_bins);
                let m = Array2::from_shape_fn((d, raw_len(config.spline_bins)), |(_, c)| row[c]);
                NoiseParams::Spline {
                    raw: params.add("noise.spline", m),
                }
            }
        };
        Ok(Self {
            specs,
            config,
            params,
            embeddings,
            ell,
            zeta,
            noise,
            kmax,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.specs.len()
    }

    pub fn log_var_id(&self) -> Option<ParamId> {
        match self.noise {
            NoiseParams::Gaussian { log_var } => Some(log_var),
            _ => None,
        }
    }

    pub fn spline_id(&self) -> Option<ParamId> {
        match self.noise {
            NoiseParams::Spline { raw } => Some(raw),
            _ => None,
        }
    }

    fn mask(&self, n: usize, pred: impl Fn(&VariableKind) -> bool) -> Option<Array2<f64>> {
        let cols: Vec<f64> = self.specs.iter().map(|s| if pred(&s.kind) { 1.0 } else { 0.0 }).collect();
        if cols.iter().all(|c| *c == 0.0) {
            return None;
        }
        Some(Array2::from_shape_fn((n, cols.len()), |(_, c)| cols[c]))
    }

    /// ℓ input encoding: value column (continuous/binary) then a one-hot block
    /// for categorical nodes. Rows are ordered `(sample, node)`.
    fn encode<'t>(&self, tape: &'t Tape, x: Var<'t>, x_raw: &Array2<f64>) -> Var<'t> {
        let (n, d) = x_raw.dim();
        let value_mask = self.mask(n, |k| !matches!(k, VariableKind::Categorical { .. }));
        let value = match value_mask {
            Some(m) => (x * tape.constant(m)).reshape(n * d, 1),
            None => tape.zeros(n * d, 1),
        };
        if self.kmax == 0 {
            return value;
        }
        let mut onehot = Array2::zeros((n * d, self.kmax));
        for (i, spec) in self.specs.iter().enumerate() {
            if let VariableKind::Categorical { .. } = spec.kind {
                for r in 0..n {
                    let c = x_raw[[r, i]];
                    if c.is_finite() {
                        onehot[[r * d + i, c as usize]] = 1.0;
                    }
                }
            }
        }
        tape.concat_cols(&[value, tape.constant(onehot)])
    }

    /// Node outputs on the tape, `(N·D) × out_width`, rows `(sample, node)`.
    pub fn outputs_var<'t>(&self, b: &Bound<'t>, x: Var<'t>, x_raw: &Array2<f64>, w: Var<'t>) -> Var<'t> {
        let tape = x.tape();
        let (n, d) = x_raw.dim();
        let emb = b.var(self.embeddings).tile_rows(n);
        let enc = self.encode(tape, x, x_raw);
        let lat = self.ell.forward(b, tape.concat_cols(&[emb, enc]));
        let agg = node_mix(lat, w, n, d);
        self.zeta.forward(b, tape.concat_cols(&[emb, agg]))
    }

    /// Sum of per-sample log-likelihoods on the tape. `x` holds values for
    /// continuous/binary columns (possibly imputed); `x_raw` supplies class
    /// indices for categorical columns.
    pub fn log_likelihood_var<'t>(&self, b: &Bound<'t>, x: Var<'t>, x_raw: &Array2<f64>, w: Var<'t>) -> Var<'t> {
        let tape = x.tape();
        let (n, d) = x_raw.dim();
        let out = self.outputs_var(b, x, x_raw, w);
        let f = out.col(0).reshape(n, d);
        let mut total = tape.scalar(0.0);
        if let Some(cmask) = self.mask(n, |k| k.is_continuous()) {
            let resid = x - f;
            let term = match self.noise {
                NoiseParams::Gaussian { log_var } => {
                    let lv = b.var(log_var);
                    resid
                        .square()
                        .mul_row(lv.scale(-1.0).exp())
                        .add_row(lv)
                        .offset(LN_2PI)
                        .scale(-0.5)
                }
                NoiseParams::Spline { raw } => {
                    let o = rq_spline_columns(resid, b.var(raw), self.config.spline_bins, DEFAULT_BOUND);
                    o.slice_cols(0, d).square().offset(LN_2PI).scale(-0.5) + o.slice_cols(d, d)
                }
            };
            total = total + (term * tape.constant(cmask)).sum();
        }
        if let Some(bmask) = self.mask(n, |k| matches!(k, VariableKind::Binary)) {
            let term = x * f - f.softplus();
            total = total + (term * tape.constant(bmask)).sum();
        }
        for (i, spec) in self.specs.iter().enumerate() {
            if let VariableKind::Categorical { cardinality } = spec.kind {
                let rows: Vec<usize> = (0..n).map(|r| r * d + i).collect();
                let classes: Vec<usize> = (0..n).map(|r| x_raw[[r, i]] as usize).collect();
                let lp = out
                    .gather_rows(rows)
                    .slice_cols(0, cardinality)
                    .log_softmax()
                    .pick_rowwise(classes);
                total = total + lp.sum();
            }
        }
        total
    }

    fn check_x(&self, x: &Array2<f64>) -> Result<()> {
        if x.ncols() != self.num_nodes() {
            return Err(DeciError::ShapeMismatch(format!(
                "{} columns for a {}-node model",
                x.ncols(),
                self.num_nodes()
            )));
        }
        Ok(())
    }

    /// Total log-likelihood of fully observed rows under adjacency `w`.
    pub fn log_likelihood(&self, x: &Array2<f64>, w: &Array2<f64>) -> Result<f64> {
        self.check_x(x)?;
        if x.iter().any(|v| v.is_nan()) {
            return Err(DeciError::InvalidData(
                "log_likelihood needs fully observed data; use the imputation path".into(),
            ));
        }
        let d = self.num_nodes();
        if w.dim() != (d, d) {
            return Err(DeciError::ShapeMismatch(format!("adjacency {:?} for {d} nodes", w.dim())));
        }
        let tape = Tape::new();
        let b = self.params.bind_frozen(&tape);
        let ll = self.log_likelihood_var(&b, tape.constant(x.clone()), x, tape.constant(w.clone()));
        Ok(ll.item())
    }

    /// Per-node outputs `f_i(x)` (`N × out_i`) for a possibly soft adjacency.
    pub fn predict(&self, x: &Array2<f64>, w: &Array2<f64>) -> Result<Vec<Array2<f64>>> {
        self.check_x(x)?;
        let (n, d) = x.dim();
        if w.dim() != (d, d) {
            return Err(DeciError::ShapeMismatch(format!("adjacency {:?} for {d} nodes", w.dim())));
        }
        let tape = Tape::new();
        let b = self.params.bind_frozen(&tape);
        let filled = x.mapv(|v| if v.is_nan() { 0.0 } else { v });
        let out = self.outputs_var(&b, tape.constant(filled.clone()), &filled, tape.constant(w.clone()));
        let ov = out.value();
        Ok((0..d)
            .map(|i| {
                let k = self.specs[i].kind.output_width();
                Array2::from_shape_fn((n, k), |(r, c)| ov[[r * d + i, c]])
            })
            .collect())
    }

    fn encode_plain(&self, x: &Array2<f64>, j: usize) -> Array2<f64> {
        let n = x.nrows();
        let e = self.params.get(self.embeddings);
        let ed = e.ncols();
        let mut out = Array2::zeros((n, ed + 1 + self.kmax));
        for r in 0..n {
            out.slice_mut(s![r, ..ed]).assign(&e.row(j));
            match self.specs[j].kind {
                VariableKind::Categorical { .. } => out[[r, ed + 1 + x[[r, j]] as usize]] = 1.0,
                _ => out[[r, ed]] = x[[r, j]],
            }
        }
        out
    }

    fn spline_knots(&self, node: usize) -> Option<SplineKnots> {
        self.spline_id().map(|id| {
            let raw: Vec<f64> = self.params.get(id).row(node).to_vec();
            SplineKnots::from_raw(&raw, self.config.spline_bins, DEFAULT_BOUND)
        })
    }
}

impl Sem for DeciModel {
    fn specs(&self) -> &[VariableSpec] {
        &self.specs
    }

    fn node_output(&self, x: &Array2<f64>, graph: &AdjacencyMatrix, node: usize) -> Array2<f64> {
        let n = x.nrows();
        let e = self.params.get(self.embeddings);
        let ed = e.ncols();
        let mut agg = Array2::zeros((n, self.config.hidden_dim));
        for j in graph.parents(node) {
            agg += &self.ell.forward_plain(&self.params, &self.encode_plain(x, j));
        }
        let mut zin = Array2::zeros((n, ed + self.config.hidden_dim));
        for r in 0..n {
            zin.slice_mut(s![r, ..ed]).assign(&e.row(node));
        }
        zin.slice_mut(s![.., ed..]).assign(&agg);
        let out = self.zeta.forward_plain(&self.params, &zin);
        let k = self.specs[node].kind.output_width();
        out.slice(s![.., ..k]).to_owned()
    }

    fn noise_from_base(&self, node: usize, u: &[f64]) -> Vec<f64> {
        match self.noise {
            NoiseParams::Gaussian { log_var } => {
                let sd = (0.5 * self.params.get(log_var)[[0, node]]).exp();
                u.iter().map(|v| sd * v).collect()
            }
            NoiseParams::Spline { .. } => {
                let k = self.spline_knots(node).expect("spline noise");
                u.iter().map(|v| k.inverse(*v).0).collect()
            }
        }
    }

    fn noise_log_density(&self, node: usize, z: &[f64]) -> Vec<f64> {
        match self.noise {
            NoiseParams::Gaussian { log_var } => {
                let lv = self.params.get(log_var)[[0, node]];
                let inv = (-lv).exp();
                z.iter().map(|v| -0.5 * (LN_2PI + lv + v * v * inv)).collect()
            }
            NoiseParams::Spline { .. } => {
                let k = self.spline_knots(node).expect("spline noise");
                z.iter()
                    .map(|v| {
                        let (u, ld) = k.forward(*v);
                        -0.5 * (LN_2PI + u * u) + ld
                    })
                    .collect()
            }
        }
    }
}

struct NodeMixOp {
    n: usize,
    d: usize,
    h: usize,
    lat_node_major: Array2<f64>,
    w: Array2<f64>,
}

/// `(N·D)×H` rows `(sample, node)` to `D × (N·H)`.
fn to_node_major(l: &Array2<f64>, n: usize, d: usize, h: usize) -> Array2<f64> {
    let mut out = Array2::zeros((d, n * h));
    for r in 0..n {
        for j in 0..d {
            out.slice_mut(s![j, r * h..(r + 1) * h]).assign(&l.row(r * d + j));
        }
    }
    out
}

fn from_node_major(m: &Array2<f64>, n: usize, d: usize, h: usize) -> Array2<f64> {
    let mut out = Array2::zeros((n * d, h));
    for r in 0..n {
        for j in 0..d {
            out.row_mut(r * d + j).assign(&m.slice(s![j, r * h..(r + 1) * h]));
        }
    }
    out
}

impl CustomOp for NodeMixOp {
    fn name(&self) -> &'static str {
        "node_mix"
    }

    fn backward(&self, _inputs: &[&Array2<f64>], _output: &Array2<f64>, grad: &Array2<f64>) -> Vec<Option<Array2<f64>>> {
        let g = to_node_major(grad, self.n, self.d, self.h);
        let gl = from_node_major(&self.w.dot(&g), self.n, self.d, self.h);
        let gw = self.lat_node_major.dot(&g.t());
        vec![Some(gl), Some(gw)]
    }
}

/// `out[(n, i)] = Σ_j W[j, i] · lat[(n, j)]`.
pub fn node_mix<'t>(lat: Var<'t>, w: Var<'t>, n: usize, d: usize) -> Var<'t> {
    let lv = lat.value();
    let h = lv.ncols();
    let wv = (*w.value()).clone();
    let lm = to_node_major(&lv, n, d, h);
    let out = from_node_major(&wv.t().dot(&lm), n, d, h);
    let op = NodeMixOp {
        n,
        d,
        h,
        lat_node_major: lm,
        w: wv,
    };
    lat.tape().custom(&[lat, w], out, Box::new(op))
}

#[cfg(test)]
pub(crate) mod tests_support {
    use super::*;

    /// Gives every parameter (including the zero-initialized ζ output layer
    /// and the noise parameters) a random perturbation.
    pub(crate) fn randomized(mut m: DeciModel, rng: &mut RngStream) -> DeciModel {
        for p in m.params.iter_mut() {
            p.value.mapv_inplace(|v| v + 0.4 * rng.normal());
        }
        m
    }
}
