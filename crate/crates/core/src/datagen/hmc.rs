//! Conditional interventional sampling by Hamiltonian Monte Carlo over the
//! standard-normal base noise of the free nodes.

use deci_numerics::RngStream;
use ndarray::Array2;

use crate::datagen::truth::{GroundTruthSem, NodeEquation};
use crate::error::{DeciError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct HmcConfig {
    pub burn_in: usize,
    pub thinning: usize,
    pub n_samples: usize,
    pub leapfrog_steps: usize,
    pub initial_step_size: f64,
    pub target_accept: f64,
    pub max_divergent_fraction: f64,
    pub max_retries: usize,
}

impl Default for HmcConfig {
    fn default() -> Self {
        Self {
            burn_in: 10_000,
            thinning: 5,
            n_samples: 2000,
            leapfrog_steps: 20,
            initial_step_size: 0.1,
            target_accept: 0.8,
            max_divergent_fraction: 0.05,
            max_retries: 3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct HmcOutput {
    /// Full rows of the intervened SEM, `n_samples × d`.
    pub samples: Array2<f64>,
    pub acceptance_rate: f64,
    pub step_size: f64,
    pub divergent_fraction: f64,
    pub retries: usize,
    pub warnings: Vec<String>,
}

enum Role {
    Treated(f64),
    Conditioned(f64),
    Free(usize),
}

struct Target<'a> {
    sem: &'a GroundTruthSem,
    order: Vec<usize>,
    roles: Vec<Role>,
    dim: usize,
}

impl<'a> Target<'a> {
    fn new(sem: &'a GroundTruthSem, treatment: &[(usize, f64)], condition: &[(usize, f64)]) -> Result<Self> {
        let d = sem.specs.len();
        for &(i, _) in treatment.iter().chain(condition) {
            if i >= d {
                return Err(DeciError::IndexOutOfRange { index: i, nodes: d });
            }
        }
        let treated: Vec<usize> = treatment.iter().map(|t| t.0).collect();
        let g = sem.graph.mutilate(&treated)?;
        let order = g.topological_order()?;
        let mut roles = Vec::with_capacity(d);
        let mut dim = 0;
        for i in 0..d {
            if let Some(&(_, v)) = treatment.iter().find(|t| t.0 == i) {
                if condition.iter().any(|c| c.0 == i) {
                    return Err(DeciError::InvalidQuery(format!(
                        "{} is both treated and conditioned on",
                        sem.specs[i].name
                    )));
                }
                roles.push(Role::Treated(v));
                continue;
            }
            let noise = sem.noise_dist(i);
            if let Some(&(_, c)) = condition.iter().find(|c| c.0 == i) {
                if noise.and_then(|n| n.log_density(0.0)).is_none() {
                    return Err(DeciError::Unsupported(format!(
                        "conditioning on {} needs a continuous node with a closed-form noise density",
                        sem.specs[i].name
                    )));
                }
                roles.push(Role::Conditioned(c));
            } else {
                if noise.is_none() {
                    return Err(DeciError::Unsupported(format!(
                        "HMC cannot move discrete node {}",
                        sem.specs[i].name
                    )));
                }
                roles.push(Role::Free(dim));
                dim += 1;
            }
        }
        Ok(Self { sem, order, roles, dim })
    }

    /// Fills `x` from base draws `u` and returns the log target density.
    fn fill(&self, u: &[f64], x: &mut [f64]) -> f64 {
        let mut lp = -0.5 * u.iter().map(|v| v * v).sum::<f64>();
        for &i in &self.order {
            let (f, noise) = match &self.sem.equations[i] {
                NodeEquation::Additive { f, noise } => (f, noise),
                NodeEquation::Discrete { .. } => {
                    // only treated nodes can be discrete here
                    if let Role::Treated(v) = self.roles[i] {
                        x[i] = v;
                    }
                    continue;
                }
            };
            match self.roles[i] {
                Role::Treated(v) => x[i] = v,
                Role::Conditioned(c) => {
                    lp += noise.log_density(c - f(x)).expect("checked");
                    x[i] = c;
                }
                Role::Free(k) => x[i] = f(x) + noise.from_base(u[k]),
            }
        }
        lp
    }

    fn log_density(&self, u: &[f64], scratch: &mut [f64]) -> f64 {
        self.fill(u, scratch)
    }

    fn gradient(&self, u: &[f64], scratch: &mut [f64], grad: &mut [f64]) {
        let mut v = u.to_vec();
        for k in 0..self.dim {
            let h = 1e-5 * u[k].abs().max(1.0);
            v[k] = u[k] + h;
            let up = self.log_density(&v, scratch);
            v[k] = u[k] - h;
            let down = self.log_density(&v, scratch);
            v[k] = u[k];
            grad[k] = (up - down) / (2.0 * h);
        }
    }
}

struct Transition {
    accept_prob: f64,
    divergent: bool,
}

fn transition(t: &Target, u: &mut Vec<f64>, eps: f64, steps: usize, rng: &mut RngStream, scratch: &mut [f64]) -> Transition {
    let m = t.dim;
    // jitter the trajectory length so chains cannot lock onto a period
    let eps = eps * rng.uniform_range(0.8, 1.2);
    let p0: Vec<f64> = rng.normal_vec(m);
    let lp0 = t.log_density(u, scratch);
    let h0 = -lp0 + 0.5 * p0.iter().map(|v| v * v).sum::<f64>();
    let mut q = u.clone();
    let mut p = p0;
    let mut g = vec![0.0; m];
    t.gradient(&q, scratch, &mut g);
    for s in 0..steps {
        for k in 0..m {
            p[k] += 0.5 * eps * g[k];
            q[k] += eps * p[k];
        }
        t.gradient(&q, scratch, &mut g);
        for k in 0..m {
            p[k] += 0.5 * eps * g[k];
        }
        if !q.iter().all(|v| v.is_finite()) || (s % 5 == 4 && q.iter().any(|v| v.abs() > 1e6)) {
            return Transition {
                accept_prob: 0.0,
                divergent: true,
            };
        }
    }
    let lp1 = t.log_density(&q, scratch);
    let h1 = -lp1 + 0.5 * p.iter().map(|v| v * v).sum::<f64>();
    let dh = h1 - h0;
    if !dh.is_finite() || dh > 1000.0 {
        return Transition {
            accept_prob: 0.0,
            divergent: true,
        };
    }
    let accept_prob = (-dh).exp().min(1.0);
    if rng.uniform() < accept_prob {
        *u = q;
    }
    Transition {
        accept_prob,
        divergent: false,
    }
}

/// Draws from `p(x | do(treatment), condition)` for a ground-truth SEM.
/// Conditioned nodes enter through their noise density; free nodes are
/// parameterized by their standard-normal base draws.
pub fn hmc_conditional_samples(
    sem: &GroundTruthSem,
    treatment: &[(usize, f64)],
    condition: &[(usize, f64)],
    config: &HmcConfig,
    rng: &mut RngStream,
) -> Result<HmcOutput> {
    if config.thinning == 0 || config.leapfrog_steps == 0 || config.initial_step_size <= 0.0 {
        return Err(DeciError::Config("HMC needs positive thinning, leapfrog steps and step size".into()));
    }
    let t = Target::new(sem, treatment, condition)?;
    let d = sem.specs.len();
    let mut scratch = vec![0.0; d];
    let mut samples = Array2::zeros((config.n_samples, d));
    if t.dim == 0 {
        t.fill(&[], &mut scratch);
        for mut row in samples.rows_mut() {
            row.assign(&ndarray::ArrayView1::from(&scratch[..]));
        }
        return Ok(HmcOutput {
            samples,
            acceptance_rate: 1.0,
            step_size: 0.0,
            divergent_fraction: 0.0,
            retries: 0,
            warnings: Vec::new(),
        });
    }

    let mut u = vec![0.0; t.dim];
    // stochastic approximation on log step size; the final step size is the
    // geometric mean over the second half of burn-in
    let mut log_eps = config.initial_step_size.ln();
    let mut tail_sum = 0.0;
    let mut tail_n = 0usize;
    for it in 1..=config.burn_in {
        let tr = transition(&t, &mut u, log_eps.exp(), config.leapfrog_steps, rng, &mut scratch);
        log_eps += (tr.accept_prob - config.target_accept) * (it as f64).powf(-0.6).max(0.01);
        if 2 * it > config.burn_in {
            tail_sum += log_eps;
            tail_n += 1;
        }
    }
    let mut eps = if tail_n > 0 { (tail_sum / tail_n as f64).exp() } else { config.initial_step_size };

    let mut warnings = Vec::new();
    let mut retries = 0;
    let start = u.clone();
    loop {
        let mut u_run = start.clone();
        let mut accepted = 0.0;
        let mut divergent = 0usize;
        let total = config.n_samples * config.thinning;
        for s in 0..total {
            let tr = transition(&t, &mut u_run, eps, config.leapfrog_steps, rng, &mut scratch);
            accepted += tr.accept_prob;
            divergent += tr.divergent as usize;
            if (s + 1) % config.thinning == 0 {
                t.fill(&u_run, &mut scratch);
                samples
                    .row_mut(s / config.thinning)
                    .assign(&ndarray::ArrayView1::from(&scratch[..]));
            }
        }
        let frac = divergent as f64 / total.max(1) as f64;
        if frac > config.max_divergent_fraction && retries < config.max_retries {
            retries += 1;
            eps *= 0.5;
            continue;
        }
        if frac > config.max_divergent_fraction {
            warnings.push(format!(
                "{:.1}% divergent transitions after {retries} step-size halvings",
                100.0 * frac
            ));
        }
        return Ok(HmcOutput {
            samples,
            acceptance_rate: accepted / total.max(1) as f64,
            step_size: eps,
            divergent_fraction: frac,
            retries,
            warnings,
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::VariableSpec;
    use crate::datagen::truth::NoiseDist;
    use crate::graph::AdjacencyMatrix;
    use nalgebra::{DMatrix, DVector};

    // x1 = 0.6 e1; x2 = 0.8 x1 + 0.3 e2; x3 = 0.5 x1 + 0.7 x2 + 0.3 e3
    fn linear_sem() -> GroundTruthSem {
        let specs = (1..=3).map(|i| VariableSpec::continuous(format!("x{i}"))).collect();
        let g = AdjacencyMatrix::from_edges(3, &[(0, 1), (0, 2), (1, 2)]).unwrap();
        GroundTruthSem::new(
            specs,
            g,
            vec![
                NodeEquation::root(NoiseDist::Normal { scale: 0.6 }),
                NodeEquation::additive(|x| 0.8 * x[0], NoiseDist::Normal { scale: 0.3 }),
                NodeEquation::additive(|x| 0.5 * x[0] + 0.7 * x[1], NoiseDist::Normal { scale: 0.3 }),
            ],
        )
        .unwrap()
    }

    /// Gaussian conditioning of `(x1, x2) | x3 = c` for the linear SEM, with
    /// `x1` optionally clamped.
    fn analytic(do_x1: Option<f64>, c: f64) -> (Vec<f64>, Vec<f64>) {
        let b = DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 0.0, 0.8, 0.0, 0.0, 0.5, 0.7, 0.0]);
        let mut sd = DVector::from_vec(vec![0.6, 0.3, 0.3]);
        let mut b = b;
        let mut shift = DVector::zeros(3);
        if let Some(a) = do_x1 {
            sd[0] = 0.0;
            for j in 0..3 {
                b[(j, 0)] = 0.0;
            }
            shift[1] = 0.8 * a;
            shift[2] = 0.5 * a;
        }
        let inv = (DMatrix::identity(3, 3) - b).try_inverse().unwrap();
        let mean = &inv * shift;
        let cov = &inv * DMatrix::from_diagonal(&sd.component_mul(&sd)) * inv.transpose();
        let mut m = Vec::new();
        let mut v = Vec::new();
        for i in 0..2 {
            m.push(mean[i] + cov[(i, 2)] / cov[(2, 2)] * (c - mean[2]));
            v.push(cov[(i, i)] - cov[(i, 2)] * cov[(i, 2)] / cov[(2, 2)]);
        }
        (m, v)
    }

    fn column_moments(x: &Array2<f64>, i: usize) -> (f64, f64) {
        let n = x.nrows() as f64;
        let m = x.column(i).sum() / n;
        (m, x.column(i).iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n)
    }

    #[test]
    fn matches_gaussian_conditioning() {
        let sem = linear_sem();
        let mut rng = RngStream::new(11);
        let out = hmc_conditional_samples(&sem, &[], &[(2, 1.0)], &HmcConfig::default(), &mut rng).unwrap();
        assert!(out.acceptance_rate > 0.6 && out.acceptance_rate < 0.9, "{}", out.acceptance_rate);
        assert_eq!(out.samples.nrows(), 2000);
        let (m, _) = analytic(None, 1.0);
        for i in 0..2 {
            let (em, _) = column_moments(&out.samples, i);
            assert!((em - m[i]).abs() < 0.02, "mean {i}: {em} vs {}", m[i]);
        }
        assert!(out.samples.column(2).iter().all(|v| *v == 1.0));
    }

    #[test]
    fn long_chain_matches_conditional_variance() {
        let sem = linear_sem();
        let mut rng = RngStream::new(15);
        let cfg = HmcConfig {
            n_samples: 20_000,
            ..HmcConfig::default()
        };
        let out = hmc_conditional_samples(&sem, &[], &[(2, -0.7)], &cfg, &mut rng).unwrap();
        let (m, v) = analytic(None, -0.7);
        for i in 0..2 {
            let (em, ev) = column_moments(&out.samples, i);
            assert!((em - m[i]).abs() < 0.02, "mean {i}: {em} vs {}", m[i]);
            assert!((ev / v[i] - 1.0).abs() < 0.05, "var {i}: {ev} vs {}", v[i]);
        }
    }

    #[test]
    fn conditioning_under_intervention() {
        let sem = linear_sem();
        let mut rng = RngStream::new(12);
        let out = hmc_conditional_samples(&sem, &[(0, 1.5)], &[(2, -0.5)], &HmcConfig::default(), &mut rng).unwrap();
        let (m, _) = analytic(Some(1.5), -0.5);
        let (em, _) = column_moments(&out.samples, 1);
        assert!((em - m[1]).abs() < 0.02, "{em} vs {}", m[1]);
        assert!(out.samples.column(0).iter().all(|v| *v == 1.5));
    }

    fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
        let mut a = a.to_vec();
        let mut b = b.to_vec();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        let (mut i, mut j, mut dmax) = (0, 0, 0.0f64);
        while i < a.len() && j < b.len() {
            if a[i] <= b[j] {
                i += 1;
            } else {
                j += 1;
            }
            dmax = dmax.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
        }
        dmax
    }

    #[test]
    fn empty_condition_is_interventional_sampling() {
        let sem = linear_sem();
        let mut rng = RngStream::new(13);
        let cfg = HmcConfig {
            burn_in: 2000,
            ..HmcConfig::default()
        };
        let out = hmc_conditional_samples(&sem, &[(1, 0.5)], &[], &cfg, &mut rng).unwrap();
        let direct = crate::sem::sample_interventional(&sem, &sem.graph, &[(1, 0.5)], 4000, &mut rng).unwrap();
        let a: Vec<f64> = out.samples.column(2).to_vec();
        let b: Vec<f64> = direct.column(2).to_vec();
        // critical value at alpha = 0.01
        let crit = 1.628 * ((a.len() + b.len()) as f64 / (a.len() * b.len()) as f64).sqrt();
        assert!(ks_two_sample(&a, &b) < crit);
    }

    #[test]
    fn split_half_means_agree() {
        let sem = linear_sem();
        let mut rng = RngStream::new(14);
        let cfg = HmcConfig {
            burn_in: 2000,
            ..HmcConfig::default()
        };
        let out = hmc_conditional_samples(&sem, &[], &[(2, 2.0)], &cfg, &mut rng).unwrap();
        let x = out.samples.column(0).to_vec();
        let h = x.len() / 2;
        let stats = |s: &[f64]| {
            let m = s.iter().sum::<f64>() / s.len() as f64;
            let v = s.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (s.len() - 1) as f64;
            (m, v / s.len() as f64)
        };
        let (m1, v1) = stats(&x[..h]);
        let (m2, v2) = stats(&x[h..]);
        assert!((m1 - m2).abs() < 3.0 * (v1 + v2).sqrt());
    }

    #[test]
    fn rejects_unsupported_nodes() {
        let specs = vec![VariableSpec::binary("t"), VariableSpec::continuous("y")];
        let g = AdjacencyMatrix::from_edges(2, &[(0, 1)]).unwrap();
        let sem = GroundTruthSem::new(
            specs,
            g,
            vec![
                NodeEquation::discrete(|_| vec![0.5, 0.5]),
                NodeEquation::additive(|x| x[0], NoiseDist::Normal { scale: 1.0 }),
            ],
        )
        .unwrap();
        let mut rng = RngStream::new(0);
        let cfg = HmcConfig::default();
        assert!(matches!(
            hmc_conditional_samples(&sem, &[], &[(1, 0.0)], &cfg, &mut rng),
            Err(DeciError::Unsupported(_))
        ));
        assert!(hmc_conditional_samples(&sem, &[(0, 1.0)], &[(0, 1.0)], &cfg, &mut rng).is_err());
        let small = HmcConfig {
            burn_in: 10,
            n_samples: 5,
            ..cfg
        };
        let out = hmc_conditional_samples(&sem, &[(0, 1.0)], &[(1, 0.3)], &small, &mut rng).unwrap();
        assert!(out.samples.rows().into_iter().all(|r| r[0] == 1.0 && r[1] == 0.3));
    }
}
