//! ENCO-style factorized posterior over directed graphs.
//!
//! Each unordered pair `{i, j}` with `i < j` has an existence logit `γ` and an
//! orientation logit `θ`: `p(i→j) = σ(γ)σ(θ)`, `p(j→i) = σ(γ)σ(−θ)`.

use deci_numerics::gumbel::binary_gumbel;
use deci_numerics::{sigmoid, Bound, CustomOp, ParamId, ParamStore, RngStream, Var};
use ndarray::Array2;

use crate::error::{DeciError, Result};
use crate::graph::adjacency::AdjacencyMatrix;
use crate::graph::penalty::dag_penalty;

#[derive(Debug, Clone, PartialEq)]
pub struct VariationalGraphPosterior {
    d: usize,
    pairs: Vec<(usize, usize)>,
    pub params: ParamStore,
    gamma: ParamId,
    theta: ParamId,
}

pub fn pair_list(d: usize) -> Vec<(usize, usize)> {
    let mut pairs = Vec::with_capacity(d * d.saturating_sub(1) / 2);
    for i in 0..d {
        for j in i + 1..d {
            pairs.push((i, j));
        }
    }
    pairs
}

fn bernoulli_entropy(l: f64) -> f64 {
    let p = sigmoid(l);
    let mut h = 0.0;
    if p > 0.0 {
        h -= p * p.ln();
    }
    if p < 1.0 {
        h -= (1.0 - p) * (1.0 - p).ln();
    }
    h
}

impl VariationalGraphPosterior {
    /// All logits zero.
    pub fn new(d: usize) -> Self {
        let p = d * d.saturating_sub(1) / 2;
        Self::from_logits(d, vec![0.0; p], vec![0.0; p]).expect("consistent sizes")
    }

    pub fn from_logits(d: usize, gamma: Vec<f64>, theta: Vec<f64>) -> Result<Self> {
        let pairs = pair_list(d);
        if gamma.len() != pairs.len() || theta.len() != pairs.len() {
            return Err(DeciError::ShapeMismatch(format!(
                "{} nodes need {} pair logits, got {} and {}",
                d,
                pairs.len(),
                gamma.len(),
                theta.len()
            )));
        }
        let mut params = ParamStore::new();
        let np = pairs.len();
        let gamma = params.add("graph.gamma", Array2::from_shape_vec((1, np), gamma).unwrap());
        let theta = params.add("graph.theta", Array2::from_shape_vec((1, np), theta).unwrap());
        Ok(Self {
            d,
            pairs,
            params,
            gamma,
            theta,
        })
    }

    /// Posterior saturated on `g` (logits ±`magnitude`).
    pub fn point_mass(g: &AdjacencyMatrix, magnitude: f64) -> Result<Self> {
        let d = g.num_nodes();
        let mut gamma = Vec::new();
        let mut theta = Vec::new();
        for (i, j) in pair_list(d) {
            match (g.has_edge(i, j), g.has_edge(j, i)) {
                (true, true) => {
                    return Err(DeciError::InvalidData(format!(
                        "pair ({i},{j}) has both directions; not representable"
                    )))
                }
                (true, false) => {
                    gamma.push(magnitude);
                    theta.push(magnitude);
                }
                (false, true) => {
                    gamma.push(magnitude);
                    theta.push(-magnitude);
                }
                (false, false) => {
                    gamma.push(-magnitude);
                    theta.push(0.0);
                }
            }
        }
        Self::from_logits(d, gamma, theta)
    }

    pub fn num_nodes(&self) -> usize {
        self.d
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn gamma(&self) -> &Array2<f64> {
        self.params.get(self.gamma)
    }

    pub fn theta(&self) -> &Array2<f64> {
        self.params.get(self.theta)
    }

    pub fn gamma_id(&self) -> ParamId {
        self.gamma
    }

    pub fn theta_id(&self) -> ParamId {
        self.theta
    }

    pub fn edge_probabilities(&self) -> Array2<f64> {
        let mut p = Array2::zeros((self.d, self.d));
        for (k, &(i, j)) in self.pairs.iter().enumerate() {
            let e = sigmoid(self.gamma()[[0, k]]);
            let t = self.theta()[[0, k]];
            p[[i, j]] = e * sigmoid(t);
            p[[j, i]] = e * sigmoid(-t);
        }
        p
    }

    /// Hard draw from the factorized distribution.
    pub fn sample(&self, rng: &mut RngStream) -> AdjacencyMatrix {
        let mut g = AdjacencyMatrix::empty(self.d);
        for (k, &(i, j)) in self.pairs.iter().enumerate() {
            let exists = self.gamma()[[0, k]] + rng.logistic() > 0.0;
            let forward = self.theta()[[0, k]] + rng.logistic() > 0.0;
            if exists {
                if forward {
                    g.set_edge(i, j, true);
                } else {
                    g.set_edge(j, i, true);
                }
            }
        }
        g
    }

    /// Straight-through Gumbel sample on the tape: binary forward values,
    /// relaxed gradients to the logits held in `bound`.
    pub fn sample_var<'t>(&self, bound: &Bound<'t>, temperature: f64, rng: &mut RngStream) -> Var<'t> {
        let e = binary_gumbel(bound.var(self.gamma), temperature, true, rng);
        let o = binary_gumbel(bound.var(self.theta), temperature, true, rng);
        pairs_to_adjacency(e, o, self.d)
    }

    /// Entropy of the induced distribution over graphs: per pair,
    /// `H(e) + P(e = 1) H(o)`, since orientation is irrelevant without an edge.
    pub fn entropy(&self) -> f64 {
        self.gamma()
            .iter()
            .zip(self.theta().iter())
            .map(|(g, t)| bernoulli_entropy(*g) + sigmoid(*g) * bernoulli_entropy(*t))
            .sum()
    }

    pub fn entropy_var<'t>(&self, bound: &Bound<'t>) -> Var<'t> {
        let h = |l: Var<'t>| l.softplus() - l * l.sigmoid();
        let g = bound.var(self.gamma);
        (h(g) + g.sigmoid() * h(bound.var(self.theta))).sum()
    }

    /// Thresholded mode and whether it is cyclic.
    pub fn mode(&self) -> (AdjacencyMatrix, bool) {
        let mut g = AdjacencyMatrix::empty(self.d);
        for (k, &(i, j)) in self.pairs.iter().enumerate() {
            if sigmoid(self.gamma()[[0, k]]) > 0.5 {
                if self.theta()[[0, k]] >= 0.0 {
                    g.set_edge(i, j, true);
                } else {
                    g.set_edge(j, i, true);
                }
            }
        }
        let cyclic = !g.is_acyclic();
        (g, cyclic)
    }

    /// Monte Carlo estimate of `E_q[h(G)]`.
    pub fn expected_penalty(&self, samples: usize, rng: &mut RngStream) -> f64 {
        let total: f64 = (0..samples)
            .map(|_| dag_penalty(&self.sample(rng).to_matrix()).expect("square"))
            .sum();
        total / samples as f64
    }
}

struct PairsToAdjacency {
    d: usize,
}

impl CustomOp for PairsToAdjacency {
    fn name(&self) -> &'static str {
        "pairs_to_adjacency"
    }

    fn backward(&self, inputs: &[&Array2<f64>], _output: &Array2<f64>, grad: &Array2<f64>) -> Vec<Option<Array2<f64>>> {
        let (e, o) = (inputs[0], inputs[1]);
        let mut ge = Array2::zeros(e.dim());
        let mut go = Array2::zeros(o.dim());
        for (k, (i, j)) in pair_list(self.d).into_iter().enumerate() {
            let (gf, gb) = (grad[[i, j]], grad[[j, i]]);
            ge[[0, k]] = gf * o[[0, k]] + gb * (1.0 - o[[0, k]]);
            go[[0, k]] = e[[0, k]] * (gf - gb);
        }
        vec![Some(ge), Some(go)]
    }
}

/// `W[i,j] = e·o`, `W[j,i] = e·(1 − o)` for each pair `i < j`.
pub fn pairs_to_adjacency<'t>(e: Var<'t>, o: Var<'t>, d: usize) -> Var<'t> {
    let (ev, ov) = (e.value(), o.value());
    let mut w = Array2::zeros((d, d));
    for (k, (i, j)) in pair_list(d).into_iter().enumerate() {
        w[[i, j]] = ev[[0, k]] * ov[[0, k]];
        w[[j, i]] = ev[[0, k]] * (1.0 - ov[[0, k]]);
    }
    e.tape().custom(&[e, o], w, Box::new(PairsToAdjacency { d }))
}

/// Anything that yields hard graph draws.
pub trait GraphDistribution: Sync {
    fn num_nodes(&self) -> usize;
    fn sample_graph(&self, rng: &mut RngStream) -> AdjacencyMatrix;
}

impl GraphDistribution for VariationalGraphPosterior {
    fn num_nodes(&self) -> usize {
        self.d
    }
    fn sample_graph(&self, rng: &mut RngStream) -> AdjacencyMatrix {
        self.sample(rng)
    }
}

/// A single fixed graph.
impl GraphDistribution for AdjacencyMatrix {
    fn num_nodes(&self) -> usize {
        AdjacencyMatrix::num_nodes(self)
    }
    fn sample_graph(&self, _rng: &mut RngStream) -> AdjacencyMatrix {
        self.clone()
    }
}

#[derive(Debug, Clone)]
pub struct DagDraws {
    pub graphs: Vec<AdjacencyMatrix>,
    pub rejected: usize,
}

/// Draws `n` acyclic graphs, rejecting cyclic ones (at most `10n` attempts).
/// Fails when more than half of the attempts were cyclic.
pub fn sample_dags(dist: &dyn GraphDistribution, n: usize, rng: &mut RngStream) -> Result<DagDraws> {
    let mut graphs = Vec::with_capacity(n);
    let mut rejected = 0;
    let mut attempts = 0;
    while graphs.len() < n && attempts < 10 * n.max(1) {
        attempts += 1;
        let g = dist.sample_graph(rng);
        if g.is_acyclic() {
            graphs.push(g);
        } else {
            rejected += 1;
        }
    }
    if 2 * rejected > attempts || graphs.len() < n {
        return Err(DeciError::PosteriorNotDag {
            cyclic: rejected,
            draws: attempts,
        });
    }
    Ok(DagDraws { graphs, rejected })
}

#[cfg(test)]
mod tests {
    use super::*;
    use deci_numerics::gradcheck::{numerical_gradient, relative_error, FD_STEP};
    use deci_numerics::Tape;

    #[test]
    fn zero_logits_give_quarter_probabilities() {
        let q = VariationalGraphPosterior::new(3);
        let p = q.edge_probabilities();
        for ((r, c), v) in p.indexed_iter() {
            assert_eq!(*v, if r == c { 0.0 } else { 0.25 });
        }
        assert!((VariationalGraphPosterior::new(2).entropy() - 1.5 * 2f64.ln()).abs() < 1e-12);
        assert_eq!(q.mode().0.num_edges(), 0);
    }

    #[test]
    fn scalar_probability_and_entropy() {
        let q = VariationalGraphPosterior::from_logits(2, vec![0.5], vec![-0.3]).unwrap();
        let p = q.edge_probabilities();
        assert!((p[[0, 1]] - sigmoid(0.5) * sigmoid(-0.3)).abs() < 1e-15);
        assert!((p[[1, 0]] - sigmoid(0.5) * sigmoid(0.3)).abs() < 1e-15);
        let q = VariationalGraphPosterior::from_logits(2, vec![1.0], vec![-2.0]).unwrap();
        let h = |p: f64| -p * p.ln() - (1.0 - p) * (1.0 - p).ln();
        assert!((q.entropy() - h(sigmoid(1.0)) - sigmoid(1.0) * h(sigmoid(-2.0))).abs() < 1e-12);
        // three graphs: empty, 0->1, 1->0
        let p = q.edge_probabilities();
        let direct: f64 = [1.0 - p[[0, 1]] - p[[1, 0]], p[[0, 1]], p[[1, 0]]].iter().map(|v| -v * v.ln()).sum();
        assert!((q.entropy() - direct).abs() < 1e-12);
        let sat = VariationalGraphPosterior::from_logits(2, vec![800.0], vec![-800.0]).unwrap();
        assert_eq!(sat.entropy(), 0.0);
    }

    #[test]
    fn entropy_tape_matches_plain() {
        let q = VariationalGraphPosterior::from_logits(3, vec![0.1, -2.0, 3.0], vec![1.0, 0.0, -0.5]).unwrap();
        let tape = Tape::new();
        let b = q.params.bind(&tape);
        assert!((q.entropy_var(&b).item() - q.entropy()).abs() < 1e-12);
    }

    #[test]
    fn point_mass_and_mode() {
        let g = AdjacencyMatrix::from_edges(3, &[(2, 0), (0, 1)]).unwrap();
        let q = VariationalGraphPosterior::point_mass(&g, 50.0).unwrap();
        let (m, cyclic) = q.mode();
        assert_eq!(m, g);
        assert!(!cyclic);
        let mut rng = RngStream::new(0);
        assert_eq!(q.sample(&mut rng), g);
    }

    #[test]
    fn mode_from_hand_logits() {
        // pairs (0,1), (0,2), (1,2)
        let q = VariationalGraphPosterior::from_logits(3, vec![1.0, -1.0, 0.2], vec![-0.5, 3.0, 0.1]).unwrap();
        let (m, _) = q.mode();
        assert_eq!(m.edges(), vec![(1, 0), (1, 2)]);
    }

    #[test]
    fn hard_frequencies_match_probabilities() {
        let q = VariationalGraphPosterior::from_logits(3, vec![0.4, -0.7, 1.2], vec![0.9, -0.2, 0.0]).unwrap();
        let p = q.edge_probabilities();
        let n = 100_000;
        let mut counts = Array2::<f64>::zeros((3, 3));
        let mut rng = RngStream::new(9);
        let tape = Tape::new();
        let b = q.params.bind_frozen(&tape);
        for s in 0..n {
            // alternate the plain and the tape sampler: both must follow p
            let w = if s % 2 == 0 {
                q.sample(&mut rng).to_matrix()
            } else {
                (*q.sample_var(&b, 0.25, &mut rng).value()).clone()
            };
            assert!(w[[0, 1]] * w[[1, 0]] == 0.0);
            counts += &w;
        }
        for ((r, c), pv) in p.indexed_iter() {
            let f = counts[[r, c]] / n as f64;
            let se = (pv * (1.0 - pv) / n as f64).sqrt().max(1e-12);
            assert!((f - pv).abs() < 3.0 * se + 1e-12, "({r},{c}): {f} vs {pv}");
        }
    }

    #[test]
    fn very_negative_existence_gives_empty_graph() {
        let q = VariationalGraphPosterior::from_logits(3, vec![-60.0; 3], vec![0.0; 3]).unwrap();
        let mut rng = RngStream::new(1);
        assert!((0..1000).all(|_| q.sample(&mut rng).num_edges() == 0));
    }

    #[test]
    fn pairs_to_adjacency_gradient() {
        let mut rng = RngStream::new(4);
        for _ in 0..20 {
            let e = Array2::from_shape_fn((1, 6), |_| rng.uniform());
            let o = Array2::from_shape_fn((1, 6), |_| rng.uniform());
            let c = Array2::from_shape_fn((4, 4), |_| rng.normal());
            let err = deci_numerics::gradcheck::check_gradient(&[e, o], |tape, v| {
                (pairs_to_adjacency(v[0], v[1], 4) * tape.constant(c.clone())).sum()
            });
            assert!(err < 1e-4);
        }
    }

    #[test]
    fn entropy_gradient() {
        let q = VariationalGraphPosterior::from_logits(3, vec![0.1, -2.0, 3.0], vec![1.0, 0.0, -0.5]).unwrap();
        let tape = Tape::new();
        let b = q.params.bind(&tape);
        let g = tape.backward(q.entropy_var(&b)).unwrap();
        let analytic = b.grads(&g);
        let inputs: Vec<Array2<f64>> = q.params.iter().map(|p| p.value.clone()).collect();
        let numeric = numerical_gradient(&inputs, FD_STEP, |v| {
            VariationalGraphPosterior::from_logits(3, v[0].iter().cloned().collect(), v[1].iter().cloned().collect())
                .unwrap()
                .entropy()
        });
        assert!(relative_error(&analytic, &numeric) < 1e-4);
    }

    #[test]
    fn cyclic_posterior_rejected() {
        // point mass on a 3-cycle is impossible; use a posterior that mostly
        // produces the cycle 0->1->2->0
        let q = VariationalGraphPosterior::from_logits(3, vec![40.0; 3], vec![40.0, -40.0, 40.0]).unwrap();
        let mut rng = RngStream::new(2);
        assert!(matches!(sample_dags(&q, 10, &mut rng), Err(DeciError::PosteriorNotDag { .. })));
        let ok = sample_dags(&VariationalGraphPosterior::new(3), 50, &mut rng).unwrap();
        assert_eq!(ok.graphs.len(), 50);
        assert!(ok.graphs.iter().all(|g| g.is_acyclic()));
    }
}
