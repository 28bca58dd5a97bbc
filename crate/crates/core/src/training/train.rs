//! The augmented-Lagrangian training loop.

use std::io::Write;

use deci_numerics::{AdamState, RngStream, Tape};
use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{DeciError, Result};
use crate::graph::{AdjacencyMatrix, GraphPrior, VariationalGraphPosterior};
use crate::sem::{Checkpoint, DeciModel};
use crate::training::auglag::AugLagState;
use crate::training::config::TrainConfig;
use crate::training::elbo::{elbo_estimate, elbo_missing, Imputation};
use crate::training::imputer::ImputationNetwork;

/// Logit magnitude of a clamped posterior.
const FIXED_LOGIT: f64 = 30.0;

/// Convergence threshold on `E_q[h(G)]`.
pub const DAG_TOLERANCE: f64 = 1e-4;

/// One line of the diagnostics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticRecord {
    pub outer: usize,
    pub step: usize,
    /// Epoch-mean ELBO per sample, or the outer-step penalty estimate for
    /// `outer_end` events.
    pub elbo: f64,
    pub penalty: f64,
    pub rho: f64,
    pub alpha: f64,
    pub lr: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub event: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    pub records: Vec<DiagnosticRecord>,
    pub outer_steps: usize,
    pub final_penalty: f64,
    pub converged: bool,
    pub warnings: Vec<String>,
}

impl Diagnostics {
    pub fn write_jsonl(&self, mut w: impl Write) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Per-sample ELBO of the last completed epoch.
    pub fn final_elbo(&self) -> Option<f64> {
        self.records.iter().rev().find(|r| r.event.is_none()).map(|r| r.elbo)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub checkpoint: Checkpoint,
    pub diagnostics: Diagnostics,
}

/// Trains on `data` with the configured seed.
pub fn train(data: &Dataset, config: &TrainConfig) -> Result<TrainOutput> {
    train_with_prior(data, config, None)
}

/// As [`train`], with an optional prior mean `W₀` and its strength.
pub fn train_with_prior(data: &Dataset, config: &TrainConfig, prior_mean: Option<(Array2<f64>, f64)>) -> Result<TrainOutput> {
    run(data, config, prior_mean, None)
}

/// Trains only the SEM, with the graph posterior clamped to `graph`. A
/// single outer step is run since the constraint already holds.
pub fn train_fixed_graph(data: &Dataset, config: &TrainConfig, graph: &AdjacencyMatrix) -> Result<TrainOutput> {
    graph.topological_order()?;
    if graph.num_nodes() != data.n_vars() {
        return Err(DeciError::ShapeMismatch(format!(
            "graph has {} nodes, data {} columns",
            graph.num_nodes(),
            data.n_vars()
        )));
    }
    run(data, config, None, Some(graph))
}

fn run(
    data: &Dataset,
    config: &TrainConfig,
    prior_mean: Option<(Array2<f64>, f64)>,
    fixed: Option<&AdjacencyMatrix>,
) -> Result<TrainOutput> {
    config.validate()?;
    let n = data.n_rows();
    let d = data.n_vars();
    if n == 0 {
        return Err(DeciError::InvalidData("dataset has no rows".into()));
    }
    let missing = data.has_missing();
    let root = RngStream::new(config.seed);
    let mut init_rng = root.substream(0);
    let mut rng = root.substream(1);
    let mut model = DeciModel::new(data.specs.clone(), config.model_config(), &mut init_rng)?;
    let mut posterior = match fixed {
        Some(g) => VariationalGraphPosterior::point_mass(g, FIXED_LOGIT)?,
        None => VariationalGraphPosterior::new(d),
    };
    let mut imputer = missing.then(|| ImputationNetwork::new(d, config.imputer_hidden_dim, &mut init_rng));
    let base_prior = match prior_mean {
        Some((w0, strength)) => GraphPrior::new(config.lambda_s, 1.0, 0.0).with_prior_mean(w0, strength)?,
        None => GraphPrior::new(config.lambda_s, 1.0, 0.0),
    };

    let batch = config.batch_size_for(n);
    let mut state = AugLagState::new();
    let mut diag = Diagnostics::default();
    let mut penalty = f64::INFINITY;

    for outer in 0..config.outer_max_steps {
        let prior = GraphPrior {
            rho: state.rho,
            alpha: state.alpha,
            ..base_prior.clone()
        };
        let mut lr = config.lr;
        let mut adam_model = AdamState::new(&model.params, lr);
        let mut adam_post = AdamState::new(&posterior.params, lr);
        let mut adam_imp = imputer.as_ref().map(|i| AdamState::new(&i.params, lr));
        let mut best = f64::INFINITY;
        let mut since_best = 0;
        let mut since_decay_or_best = 0;
        let mut decays = 0;
        let mut step = 0;
        'inner: while step < config.inner_max_steps {
            let order = rng.permutation(n);
            let mut epoch_loss = 0.0;
            let mut epoch_penalty = 0.0;
            let mut epoch_steps = 0;
            for chunk in order.chunks(batch) {
                if step >= config.inner_max_steps {
                    break;
                }
                let rows = data.values.select(Axis(0), chunk);
                let tape = Tape::new();
                let mb = model.params.bind(&tape);
                let pb = posterior.params.bind(&tape);
                let ib = imputer.as_ref().map(|i| i.params.bind(&tape));
                let parts = match (&imputer, &ib) {
                    (Some(net), Some(bound)) => elbo_missing(
                        &tape,
                        &model,
                        &mb,
                        &posterior,
                        &pb,
                        Imputation { net, bound },
                        &prior,
                        &rows,
                        n,
                        config.temperature,
                        &mut rng,
                    )?,
                    _ => elbo_estimate(&tape, &model, &mb, &posterior, &pb, &prior, &rows, n, config.temperature, &mut rng)?,
                };
                let loss = parts.elbo.scale(-1.0 / n as f64);
                let lv = loss.item();
                if !lv.is_finite() {
                    return Err(DeciError::NonFiniteLoss { outer, inner: step });
                }
                let grads = tape.backward(loss)?;
                adam_model.step(&mut model.params, &mb.grads(&grads))?;
                if fixed.is_none() {
                    adam_post.step(&mut posterior.params, &pb.grads(&grads))?;
                }
                if let (Some(imp), Some(state), Some(b)) = (imputer.as_mut(), adam_imp.as_mut(), ib.as_ref()) {
                    state.step(&mut imp.params, &b.grads(&grads))?;
                }
                epoch_loss += lv;
                epoch_penalty += parts.penalty;
                epoch_steps += 1;
                step += 1;
            }
            let mean_loss = epoch_loss / epoch_steps as f64;
            diag.records.push(DiagnosticRecord {
                outer,
                step,
                elbo: -mean_loss,
                penalty: epoch_penalty / epoch_steps as f64,
                rho: state.rho,
                alpha: state.alpha,
                lr,
                event: None,
            });
            if mean_loss < best {
                best = mean_loss;
                since_best = 0;
                since_decay_or_best = 0;
            } else {
                since_best += epoch_steps;
                since_decay_or_best += epoch_steps;
            }
            if since_best >= config.inner_patience {
                break 'inner;
            }
            if since_decay_or_best >= config.lr_patience {
                if decays >= config.max_lr_decays {
                    break 'inner;
                }
                decays += 1;
                since_decay_or_best = 0;
                lr /= config.lr_decay_factor;
                adam_model.step_size = lr;
                adam_post.step_size = lr;
                if let Some(a) = adam_imp.as_mut() {
                    a.step_size = lr;
                }
                diag.records.push(DiagnosticRecord {
                    outer,
                    step,
                    elbo: -mean_loss,
                    penalty: epoch_penalty / epoch_steps as f64,
                    rho: state.rho,
                    alpha: state.alpha,
                    lr,
                    event: Some("lr_decay".into()),
                });
            }
        }
        penalty = posterior.expected_penalty(config.penalty_samples, &mut rng);
        state = state.update(penalty, config.progress_ratio, config.rho_multiplier, config.penalty_cap)?;
        diag.outer_steps = outer + 1;
        diag.records.push(DiagnosticRecord {
            outer,
            step,
            elbo: -best,
            penalty,
            rho: state.rho,
            alpha: state.alpha,
            lr,
            event: Some("outer_end".into()),
        });
        if fixed.is_some() || state.at_cap(config.penalty_cap) {
            break;
        }
    }
    diag.final_penalty = penalty;
    diag.converged = penalty < DAG_TOLERANCE;
    if !diag.converged {
        diag.warnings.push(format!(
            "posterior not DAG-converged: E[h(G)] = {penalty:.3e} after {} outer steps",
            diag.outer_steps
        ));
    }
    Ok(TrainOutput {
        checkpoint: Checkpoint {
            model,
            posterior,
            imputer,
        },
        diagnostics: diag,
    })
}
