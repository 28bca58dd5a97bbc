//! The CSuite benchmark SEMs.

use deci_numerics::{sigmoid, softplus, RngStream};

use crate::data::{Dataset, VariableSpec};
use crate::datagen::anm::build_package;
use crate::datagen::package::GroundTruthPackage;
use crate::datagen::truth::{GroundTruthSem, NodeEquation, NoiseDist};
use crate::error::{DeciError, Result};
use crate::graph::AdjacencyMatrix;
use crate::inference::CausalQuery;

pub const CSUITE_NAMES: [&str; 13] = [
    "lingauss",
    "linexp",
    "nonlingauss",
    "nonlin_simpson",
    "symprod_simpson",
    "large_backdoor",
    "weak_arrows",
    "cat_to_cts",
    "cts_to_cat",
    "mixed_simpson",
    "large_backdoor_binary_t",
    "weak_arrows_binary_t",
    "mixed_confounding",
];

pub const CSUITE_SAMPLES: usize = 2000;

fn cont(names: &[&str]) -> Vec<VariableSpec> {
    names.iter().map(|n| VariableSpec::continuous(*n)).collect()
}

fn xs(d: usize) -> Vec<String> {
    (1..=d).map(|i| format!("X{i}")).collect()
}

/// Edges given with 1-based node labels.
fn graph(d: usize, edges: &[(usize, usize)]) -> Result<AdjacencyMatrix> {
    let e: Vec<(usize, usize)> = edges.iter().map(|(a, b)| (a - 1, b - 1)).collect();
    AdjacencyMatrix::from_edges(d, &e)
}

const fn normal(scale: f64) -> NoiseDist {
    NoiseDist::Normal { scale }
}
const fn laplace(scale: f64) -> NoiseDist {
    NoiseDist::Laplace { scale }
}
const fn exp(scale: f64) -> NoiseDist {
    NoiseDist::ShiftedExp { scale }
}

/// A CSuite SEM with its test queries.
pub struct CsuiteSem {
    pub sem: GroundTruthSem,
    pub queries: Vec<CausalQuery>,
}

fn two_node(f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static, noise: NoiseDist) -> Result<CsuiteSem> {
    let names = xs(2);
    let sem = GroundTruthSem::new(
        cont(&[&names[0], &names[1]]),
        graph(2, &[(1, 2)])?,
        vec![NodeEquation::root(normal(1.0)), NodeEquation::additive(f, noise)],
    )?;
    Ok(CsuiteSem {
        sem,
        queries: vec![CausalQuery::ate(0, 1.0, 0.0, 1)],
    })
}

fn lingauss() -> Result<CsuiteSem> {
    two_node(|x| 0.5 * x[0], normal(3f64.sqrt() / 2.0))
}

fn linexp() -> Result<CsuiteSem> {
    two_node(|x| 0.5 * x[0], exp(3f64.sqrt() / 2.0))
}

fn nonlingauss() -> Result<CsuiteSem> {
    let alpha = (1.0 - 6.0 * (1.0 / 5f64.sqrt() - 1.0 / 3.0)).sqrt();
    two_node(|x| 6f64.sqrt() * (-x[0] * x[0]).exp(), normal(alpha))
}

fn nonlin_simpson() -> Result<CsuiteSem> {
    let names = xs(4);
    let sem = GroundTruthSem::new(
        names.iter().map(VariableSpec::continuous).collect(),
        graph(4, &[(1, 2), (3, 1), (3, 2), (2, 4)])?,
        vec![
            NodeEquation::additive(|x| 2.0 * x[2].tanh(), exp(0.5)),
            NodeEquation::additive(|x| (2.0 * x[0]).tanh() - 2.0 * x[2].tanh(), laplace(0.3)),
            NodeEquation::root(laplace(1.0)),
            NodeEquation::additive(|x| softplus(x[1]), laplace(0.3)),
        ],
    )?;
    Ok(CsuiteSem {
        sem,
        queries: vec![CausalQuery::ate(0, 1.0, -1.0, 1), CausalQuery::cate(0, 1.0, -1.0, 1, 2, 1.0)],
    })
}

fn symprod_simpson() -> Result<CsuiteSem> {
    let names = xs(4);
    let sem = GroundTruthSem::new(
        names.iter().map(VariableSpec::continuous).collect(),
        graph(4, &[(1, 2), (3, 1), (3, 2), (3, 4)])?,
        vec![
            NodeEquation::additive(|x| x[2].tanh(), laplace(0.8)),
            NodeEquation::additive(|x| x[0] * x[2], exp(0.3)),
            NodeEquation::root(normal(1.0)),
            NodeEquation::additive(|x| x[2], normal(0.5)),
        ],
    )?;
    Ok(CsuiteSem {
        sem,
        queries: vec![CausalQuery::ate(0, 1.0, -1.0, 1), CausalQuery::cate(0, 1.0, -1.0, 1, 3, 1.25)],
    })
}

const BACKDOOR_EDGES: [(usize, usize); 9] = [(1, 2), (1, 3), (2, 4), (3, 5), (4, 6), (5, 7), (6, 8), (7, 9), (8, 9)];

/// Nine-node backdoor SEM; `weak` adds weak arrows from X1..X6 into X9 and
/// `binary_t` makes X8 binary.
fn backdoor(weak: bool, binary_t: bool) -> Result<CsuiteSem> {
    let names = xs(9);
    let mut specs: Vec<VariableSpec> = names.iter().map(VariableSpec::continuous).collect();
    let mut edges = BACKDOOR_EDGES.to_vec();
    if weak {
        edges.extend((1..=6).map(|k| (k, 9)));
    }
    // chain equations alternate between a squashing and a rectifying map
    let tanh_step = |p: usize| NodeEquation::additive(move |x: &[f64]| 1.5 * x[p].tanh(), laplace(0.5));
    let softplus_step = |p: usize| NodeEquation::additive(move |x: &[f64]| softplus(1.5 * x[p]) - 1.0, exp(0.5));
    let x8 = if binary_t {
        specs[7] = VariableSpec::binary("X8");
        NodeEquation::discrete(|x| {
            let p = sigmoid(2.0 * x[5]);
            vec![1.0 - p, p]
        })
    } else {
        tanh_step(5)
    };
    let x9 = NodeEquation::additive(
        move |x| {
            let mut v = 2.0 * x[7].tanh() + 0.7 * softplus(x[6]);
            if weak {
                v += 0.15 * x[..6].iter().map(|x| x.tanh()).sum::<f64>();
            }
            v
        },
        laplace(0.3),
    );
    let equations = vec![
        NodeEquation::root(laplace(1.0)),
        tanh_step(0),
        softplus_step(0),
        softplus_step(1),
        tanh_step(2),
        tanh_step(3),
        // the conditioning node gets full-support noise
        NodeEquation::additive(|x: &[f64]| softplus(1.5 * x[4]) - 1.0, laplace(0.5)),
        x8,
        x9,
    ];
    let sem = GroundTruthSem::new(specs, graph(9, &edges)?, equations)?;
    let queries = if binary_t {
        vec![CausalQuery::ate(7, 1.0, 0.0, 8)]
    } else {
        vec![CausalQuery::ate(7, 1.0, -1.0, 8), CausalQuery::cate(7, 1.0, -1.0, 8, 6, 0.5)]
    };
    Ok(CsuiteSem { sem, queries })
}

fn cat_to_cts() -> Result<CsuiteSem> {
    let sem = GroundTruthSem::new(
        vec![VariableSpec::categorical("X1", 3), VariableSpec::continuous("X2")],
        graph(2, &[(1, 2)])?,
        vec![
            NodeEquation::discrete(|_| vec![0.25, 0.25, 0.5]),
            NodeEquation::additive(|x| x[0], NoiseDist::Softplus { scale: 1.6 }),
        ],
    )?;
    Ok(CsuiteSem {
        sem,
        queries: vec![CausalQuery::ate(0, 2.0, 0.0, 1)],
    })
}

fn cts_to_cat() -> Result<CsuiteSem> {
    let cut = 3f64.sqrt() / 3.0;
    let sem = GroundTruthSem::new(
        vec![VariableSpec::continuous("X1"), VariableSpec::categorical("X2", 3)],
        graph(2, &[(1, 2)])?,
        vec![
            NodeEquation::root(NoiseDist::Uniform { half_width: 3f64.sqrt() }),
            NodeEquation::discrete(move |x| {
                if x[0] < -cut {
                    vec![6.0 / 13.0, 6.0 / 13.0, 1.0 / 13.0]
                } else if x[0] < cut {
                    vec![0.125, 0.75, 0.125]
                } else {
                    vec![1.0 / 3.0; 3]
                }
            }),
        ],
    )?;
    Ok(CsuiteSem {
        sem,
        queries: vec![CausalQuery::ate(1, 2.0, 0.0, 0)],
    })
}

fn mixed_simpson() -> Result<CsuiteSem> {
    let sem = GroundTruthSem::new(
        vec![
            VariableSpec::binary("X1"),
            VariableSpec::continuous("X2"),
            VariableSpec::categorical("X3", 3),
            VariableSpec::continuous("X4"),
        ],
        graph(4, &[(1, 2), (3, 1), (3, 2), (2, 4)])?,
        vec![
            NodeEquation::discrete(|x| {
                let p = sigmoid(2.0 * (x[2] - 1.0));
                vec![1.0 - p, p]
            }),
            NodeEquation::additive(|x| 1.5 * x[0] - 1.2 * (x[2] - 1.0), exp(0.4)),
            NodeEquation::discrete(|_| vec![0.3, 0.4, 0.3]),
            NodeEquation::additive(|x| softplus(x[1]), laplace(0.3)),
        ],
    )?;
    Ok(CsuiteSem {
        sem,
        queries: vec![CausalQuery::ate(0, 1.0, 0.0, 1)],
    })
}

fn mixed_confounding() -> Result<CsuiteSem> {
    let mut specs: Vec<VariableSpec> = xs(12).iter().map(VariableSpec::continuous).collect();
    specs[0] = VariableSpec::binary("X1");
    specs[4] = VariableSpec::binary("X5");
    for i in [2, 5, 7] {
        specs[i] = VariableSpec::categorical(format!("X{}", i + 1), 3);
    }
    let edges = [
        (1, 2),
        (3, 1),
        (3, 2),
        (4, 1),
        (4, 2),
        (5, 1),
        (5, 2),
        (6, 1),
        (7, 1),
        (8, 2),
        (9, 2),
        (1, 10),
        (2, 11),
        (1, 12),
        (2, 12),
    ];
    let equations = vec![
        NodeEquation::discrete(|x| {
            let logit = 0.8 * (x[2] - 1.0) + 0.9 * x[3].tanh() + 0.7 * (2.0 * x[4] - 1.0) + 0.5 * (x[5] - 1.0)
                - 0.6 * x[6].tanh();
            let p = sigmoid(logit);
            vec![1.0 - p, p]
        }),
        NodeEquation::additive(
            |x| {
                1.2 * x[0] + 0.6 * (x[2] - 1.0) + 0.8 * x[3].tanh() - 0.7 * x[4] + 0.4 * (x[7] - 1.0)
                    + 0.6 * x[8].tanh()
            },
            laplace(0.4),
        ),
        NodeEquation::discrete(|_| vec![0.3, 0.4, 0.3]),
        NodeEquation::root(laplace(1.0)),
        NodeEquation::discrete(|_| vec![0.6, 0.4]),
        NodeEquation::discrete(|_| vec![0.5, 0.3, 0.2]),
        NodeEquation::root(NoiseDist::Softplus { scale: 1.0 }),
        NodeEquation::discrete(|_| vec![0.2, 0.3, 0.5]),
        NodeEquation::root(exp(1.0)),
        NodeEquation::additive(|x| 1.5 * x[0] - 0.75, laplace(0.5)),
        NodeEquation::additive(|x| softplus(x[1]) - 1.0, exp(0.5)),
        NodeEquation::additive(|x| x[1].tanh() * (x[0] + 0.5), laplace(0.4)),
    ];
    let sem = GroundTruthSem::new(specs, graph(12, &edges)?, equations)?;
    Ok(CsuiteSem {
        sem,
        queries: vec![CausalQuery::ate(0, 1.0, 0.0, 1)],
    })
}

/// The named CSuite SEM and its test queries.
pub fn csuite_sem(name: &str) -> Result<CsuiteSem> {
    match name {
        "lingauss" => lingauss(),
        "linexp" => linexp(),
        "nonlingauss" => nonlingauss(),
        "nonlin_simpson" => nonlin_simpson(),
        "symprod_simpson" => symprod_simpson(),
        "large_backdoor" => backdoor(false, false),
        "weak_arrows" => backdoor(true, false),
        "cat_to_cts" => cat_to_cts(),
        "cts_to_cat" => cts_to_cat(),
        "mixed_simpson" => mixed_simpson(),
        "large_backdoor_binary_t" => backdoor(false, true),
        "weak_arrows_binary_t" => backdoor(true, true),
        "mixed_confounding" => mixed_confounding(),
        _ => Err(DeciError::UnknownDataset {
            name: name.to_string(),
            valid: CSUITE_NAMES.join(", "),
        }),
    }
}

/// 2000 training rows plus ground truth for every test query.
pub fn generate_csuite(name: &str, seed: u64) -> Result<(Dataset, GroundTruthPackage)> {
    let CsuiteSem { sem, queries } = csuite_sem(name)?;
    let mut rng = RngStream::new(seed);
    build_package(name, sem, CSUITE_SAMPLES, Some(queries), &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn var(v: &[f64]) -> f64 {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64
    }

    #[test]
    fn every_name_builds_a_dag() {
        for name in CSUITE_NAMES {
            let s = csuite_sem(name).unwrap();
            assert!(s.sem.graph.is_acyclic(), "{name}");
            for q in &s.queries {
                q.validate(&s.sem.specs).unwrap();
            }
        }
        match csuite_sem("nope") {
            Err(DeciError::UnknownDataset { valid, .. }) => assert!(valid.contains("symprod_simpson")),
            _ => panic!("expected unknown dataset"),
        }
    }

    #[test]
    fn lingauss_marginal_variance_is_one() {
        let s = lingauss().unwrap();
        let x = s.sem.sample(200_000, &mut RngStream::new(1)).unwrap();
        assert!((var(&x.column(1).to_vec()) - 1.0).abs() < 0.05);
    }

    #[test]
    fn nonlingauss_moments() {
        let s = nonlingauss().unwrap();
        let n = 100_000;
        let x = s.sem.sample(n, &mut RngStream::new(2)).unwrap();
        let a = x.column(0);
        let b = x.column(1);
        let (ma, mb) = (a.mean().unwrap(), b.mean().unwrap());
        let prods: Vec<f64> = a.iter().zip(b).map(|(u, v)| (u - ma) * (v - mb)).collect();
        let cov = prods.iter().sum::<f64>() / n as f64;
        let se = (var(&prods) / n as f64).sqrt();
        assert!(cov.abs() < 3.0 * se, "{cov} {se}");
        assert!((var(&b.to_vec()) - 1.0).abs() < 0.03);
    }

    #[test]
    fn closed_form_effects() {
        let e = std::f64::consts::E;
        for (name, truth) in [
            ("lingauss", 0.5),
            ("linexp", 0.5),
            ("nonlingauss", 6f64.sqrt() * (1.0 / e - 1.0)),
            ("cts_to_cat", 0.0),
            ("cat_to_cts", 2.0),
            ("large_backdoor", 4.0 * 1f64.tanh()),
            ("mixed_simpson", 1.5),
            ("mixed_confounding", 1.2),
        ] {
            let (data, pkg) = generate_csuite(name, 3).unwrap();
            assert_eq!(data.n_rows(), CSUITE_SAMPLES);
            let c = &pkg.cases[0];
            let tol = 3.0 * c.ground_truth_stderr[0] + 1e-9;
            assert!((c.ground_truth[0] - truth).abs() <= tol, "{name}: {} vs {truth}", c.ground_truth[0]);
        }
    }

    #[test]
    fn symprod_cate_is_two() {
        let (_, pkg) = generate_csuite("symprod_simpson", 5).unwrap();
        let cate = &pkg.cases[1];
        assert!(cate.is_conditional());
        assert!((cate.ground_truth[0] - 2.0).abs() < 0.1, "{}", cate.ground_truth[0]);
        assert!(pkg.cases[0].ground_truth[0].abs() < 0.15);
    }

    #[test]
    fn ground_truth_reproducible_with_fresh_seed() {
        for name in CSUITE_NAMES {
            let (_, a) = generate_csuite(name, 10).unwrap();
            let (_, b) = generate_csuite(name, 11).unwrap();
            for (ca, cb) in a.cases.iter().zip(&b.cases) {
                let se = ca.ground_truth_stderr[0].hypot(cb.ground_truth_stderr[0]);
                assert!(
                    (ca.ground_truth[0] - cb.ground_truth[0]).abs() <= 2.0 * se + 1e-9,
                    "{name}: {} vs {}",
                    ca.ground_truth[0],
                    cb.ground_truth[0]
                );
            }
        }
    }
}
