//! The `deci` command line.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use deci_numerics::RngStream;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::datagen::anm::{generate_synthetic, GraphFamily, NoiseFamily, SyntheticSpec};
use crate::datagen::{apply_mcar_mask, generate_csuite, read_interventions, read_true_graph, write_dataset_dir};
use crate::error::{DeciError, Result};
use crate::graph::{sample_dags, write_matrix_csv, AdjacencyMatrix, GraphDistribution};
use crate::inference::{estimate_ate, estimate_cate, AteConfig, CateConfig, EffectEstimate, QuerySpec};
use crate::metrics::{cate_rmse, ate_rmse, expected_discovery_metrics, point_discovery_metrics, DiscoveryReport};
use crate::sem::{Checkpoint, NoiseKind};
use crate::training::{train, train_fixed_graph, TrainConfig};

pub const CHECKPOINT_FILE: &str = "model.ckpt";

#[derive(Debug, Parser)]
#[command(name = "deci", version, about = "Causal discovery and treatment-effect estimation")]
pub struct Cli {
    /// Worker threads for parallel estimation (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a benchmark dataset directory.
    Generate(GenerateArgs),
    /// Train a model on a dataset directory.
    Train(TrainArgs),
    /// Export edge probabilities, the mode graph and sampled DAGs.
    Graph(GraphArgs),
    /// Estimate an average treatment effect.
    Ate(EffectArgs),
    /// Estimate a conditional average treatment effect.
    Cate(EffectArgs),
    /// Score a model or adjacency matrix against a dataset's ground truth.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// CSuite dataset name.
    #[arg(long, conflicts_with_all = ["er", "sf"])]
    pub csuite: Option<String>,
    /// Erdős–Rényi graph with D nodes and E edges.
    #[arg(long, num_args = 2, value_names = ["D", "E"], conflicts_with = "sf")]
    pub er: Option<Vec<usize>>,
    /// Scale-free graph with D nodes and E edges.
    #[arg(long, num_args = 2, value_names = ["D", "E"])]
    pub sf: Option<Vec<usize>>,
    /// Noise family for random graphs: gaussian or mlp.
    #[arg(long, default_value = "gaussian")]
    pub noise: String,
    /// Rows for random graphs.
    #[arg(long, default_value_t = 5000)]
    pub n: usize,
    /// Fraction of continuous cells removed completely at random.
    #[arg(long)]
    pub missing: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory (data.csv, optional metadata.json).
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory for the checkpoint and diagnostics.
    #[arg(long)]
    pub out: PathBuf,
    /// TOML file with training settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Start from the reduced single-core settings.
    #[arg(long)]
    pub compact: bool,
    /// Noise model: gaussian or spline.
    #[arg(long)]
    pub noise: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override a setting, e.g. `--set lr=0.005`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Clamp the graph to this adjacency CSV and train only the SEM.
    #[arg(long)]
    pub fixed_graph: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GraphArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Number of DAGs to sample.
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct EffectArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Query JSON: treatment, reference, targets, condition.
    #[arg(long)]
    pub query: PathBuf,
    /// Write the result here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Use this adjacency CSV instead of posterior samples.
    #[arg(long)]
    pub graph: Option<PathBuf>,
    #[arg(long)]
    pub graphs: Option<usize>,
    #[arg(long)]
    pub samples_per_graph: Option<usize>,
    /// Random features for the conditional surrogate.
    #[arg(long)]
    pub features: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Dataset directory with graph.csv and interventions.json.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, conflicts_with = "adjacency")]
    pub checkpoint: Option<PathBuf>,
    /// Predicted adjacency CSV.
    #[arg(long)]
    pub adjacency: Option<PathBuf>,
    /// JSON array of effect estimates aligned with the test cases.
    #[arg(long)]
    pub estimates: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Posterior graphs used for the discovery metrics.
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
    #[arg(long)]
    pub graphs: Option<usize>,
    #[arg(long)]
    pub samples_per_graph: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Successful outcome of a command.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Ok,
    /// Finished, but with warnings the caller should see (exit code 2).
    Warnings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub converged: bool,
    pub final_penalty: f64,
    pub outer_steps: usize,
    pub final_elbo: Option<f64>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseScore {
    pub estimate: Vec<f64>,
    pub ground_truth: Vec<f64>,
    pub conditional: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub discovery: Option<DiscoveryReport>,
    pub ate_rmse: Option<f64>,
    pub cate_rmse: Option<f64>,
    pub cases: Vec<CaseScore>,
    pub warnings: Vec<String>,
}

fn write_output(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(p, format!("{text}\n"))?;
        }
        None => {
            let mut o = std::io::stdout().lock();
            writeln!(o, "{text}")?;
        }
    }
    Ok(())
}

fn read_graph(path: &Path) -> Result<AdjacencyMatrix> {
    AdjacencyMatrix::read_csv(fs::File::open(path)?)
}

pub fn cmd_generate(a: &GenerateArgs) -> Result<Outcome> {
    let (data, package) = match (&a.csuite, &a.er, &a.sf) {
        (Some(name), None, None) => generate_csuite(name, a.seed)?,
        (None, Some(de), None) | (None, None, Some(de)) => {
            let family = if a.er.is_some() { GraphFamily::Er } else { GraphFamily::Sf };
            let noise: NoiseFamily = a.noise.parse()?;
            let spec = SyntheticSpec {
                n: a.n,
                ..SyntheticSpec::new(family, de[0], de[1], noise, a.seed)
            };
            generate_synthetic(&spec)?
        }
        _ => {
            return Err(DeciError::InvalidData(
                "choose exactly one of --csuite, --er or --sf".into(),
            ))
        }
    };
    let data = match a.missing {
        Some(rate) => apply_mcar_mask(&data, rate, &mut RngStream::with_stream(a.seed, 7))?,
        None => data,
    };
    write_dataset_dir(&a.out, &data, &package)?;
    Ok(Outcome::Ok)
}

/// Applies `key=value` overrides to a TOML table; values are parsed as TOML
/// and fall back to plain strings.
fn apply_overrides(base: &str, overrides: &[String]) -> Result<String> {
    let mut table: toml::Table = toml::from_str(base).map_err(|e| DeciError::Config(e.to_string()))?;
    for o in overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| DeciError::Config(format!("override `{o}` is not KEY=VALUE")))?;
        let parsed = toml::from_str::<toml::Table>(&format!("v = {v}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(v.to_string()));
        table.insert(k.trim().to_string(), parsed);
    }
    toml::to_string(&table).map_err(|e| DeciError::Config(e.to_string()))
}

pub fn resolve_train_config(a: &TrainArgs) -> Result<TrainConfig> {
    let base = match &a.config {
        Some(p) => fs::read_to_string(p)?,
        None if a.compact => TrainConfig::compact().to_toml(),
        None => String::new(),
    };
    let base = if a.compact && a.config.is_some() {
        // file values win over the compact preset
        let mut preset: toml::Table = toml::from_str(&TrainConfig::compact().to_toml()).expect("valid");
        let file: toml::Table = toml::from_str(&base).map_err(|e| DeciError::Config(e.to_string()))?;
        preset.extend(file);
        toml::to_string(&preset).expect("valid")
    } else {
        base
    };
    let mut config = TrainConfig::from_toml(&apply_overrides(&base, &a.overrides)?)?;
    if let Some(n) = &a.noise {
        config.noise = n.parse::<NoiseKind>()?;
    }
    if let Some(s) = a.seed {
        config.seed = s;
    }
    config.validate()?;
    Ok(config)
}

pub fn cmd_train(a: &TrainArgs) -> Result<Outcome> {
    let config = resolve_train_config(a)?;
    let data = Dataset::load_dir(&a.data)?;
    let out = match &a.fixed_graph {
        Some(p) => train_fixed_graph(&data, &config, &read_graph(p)?)?,
        None => train(&data, &config)?,
    };
    fs::create_dir_all(&a.out)?;
    out.checkpoint.save(a.out.join(CHECKPOINT_FILE))?;
    fs::write(a.out.join("config.toml"), config.to_toml())?;
    out.diagnostics
        .write_jsonl(std::io::BufWriter::new(fs::File::create(a.out.join("diagnostics.jsonl"))?))?;
    let d = &out.diagnostics;
    let summary = TrainSummary {
        converged: d.converged,
        final_penalty: d.final_penalty,
        outer_steps: d.outer_steps,
        final_elbo: d.final_elbo(),
        warnings: d.warnings.clone(),
    };
    fs::write(a.out.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    for w in &d.warnings {
        eprintln!("warning: {w}");
    }
    Ok(if d.converged { Outcome::Ok } else { Outcome::Warnings })
}

pub fn cmd_graph(a: &GraphArgs) -> Result<Outcome> {
    let ck = Checkpoint::load(&a.checkpoint)?;
    fs::create_dir_all(a.out.join("dags"))?;
    write_matrix_csv(&ck.posterior.edge_probabilities(), fs::File::create(a.out.join("edge_probabilities.csv"))?)?;
    let (mode, cyclic) = ck.posterior.mode();
    mode.write_csv(fs::File::create(a.out.join("mode.csv"))?)?;
    if cyclic {
        eprintln!("warning: posterior mode contains a cycle");
    }
    let mut rng = RngStream::new(a.seed);
    let draws = sample_dags(&ck.posterior, a.samples, &mut rng)?;
    for (k, g) in draws.graphs.iter().enumerate() {
        g.write_csv(fs::File::create(a.out.join("dags").join(format!("dag_{k:04}.csv")))?)?;
    }
    if draws.rejected > 0 {
        eprintln!("rejected {} cyclic draws", draws.rejected);
    }
    Ok(if cyclic { Outcome::Warnings } else { Outcome::Ok })
}

fn ate_config(graphs: Option<usize>, per_graph: Option<usize>) -> AteConfig {
    let d = AteConfig::default();
    AteConfig {
        n_graphs: graphs.unwrap_or(d.n_graphs),
        n_per_graph: per_graph.unwrap_or(d.n_per_graph),
    }
}

fn cate_config(graphs: Option<usize>, per_graph: Option<usize>, features: Option<usize>) -> CateConfig {
    let d = CateConfig::default();
    CateConfig {
        n_graphs: graphs.unwrap_or(d.n_graphs),
        n_per_graph: per_graph.unwrap_or(d.n_per_graph),
        n_features: features.unwrap_or(d.n_features),
        ..d
    }
}

#[allow(clippy::too_many_arguments)]
fn estimate(
    ck: &Checkpoint,
    graphs: &dyn GraphDistribution,
    spec: &QuerySpec,
    conditional: bool,
    n_graphs: Option<usize>,
    per_graph: Option<usize>,
    features: Option<usize>,
    rng: &mut RngStream,
) -> Result<EffectEstimate> {
    let q = spec.resolve(&ck.model.specs)?;
    if conditional {
        estimate_cate(&ck.model, graphs, &q, &cate_config(n_graphs, per_graph, features), rng)
    } else {
        if !q.condition.is_empty() {
            return Err(DeciError::InvalidQuery("the ate command takes no condition; use cate".into()));
        }
        estimate_ate(&ck.model, graphs, &q, &ate_config(n_graphs, per_graph), rng)
    }
}

pub fn cmd_effect(a: &EffectArgs, conditional: bool) -> Result<Outcome> {
    let ck = Checkpoint::load(&a.checkpoint)?;
    let spec = QuerySpec::load(&a.query)?;
    let mut rng = RngStream::new(a.seed);
    let fixed = a.graph.as_deref().map(read_graph).transpose()?;
    let graphs: &dyn GraphDistribution = match &fixed {
        Some(g) => g,
        None => &ck.posterior,
    };
    let est = estimate(&ck, graphs, &spec, conditional, a.graphs, a.samples_per_graph, a.features, &mut rng)?;
    for w in &est.warnings {
        eprintln!("warning: {w}");
    }
    write_output(a.out.as_deref(), &est.to_json()?)?;
    Ok(Outcome::Ok)
}

pub fn cmd_eval(a: &EvalArgs) -> Result<Outcome> {
    let mut warnings = Vec::new();
    let truth = read_true_graph(&a.data)?;
    let cases = read_interventions(&a.data)?;
    let ck = a.checkpoint.as_deref().map(Checkpoint::load).transpose()?;
    let mut rng = RngStream::new(a.seed);

    let discovery = match (&truth, &ck, &a.adjacency) {
        (None, _, _) => {
            warnings.push("graph.csv missing: discovery metrics skipped".to_string());
            None
        }
        (Some(t), Some(ck), _) => Some(expected_discovery_metrics(t, &ck.posterior, a.samples, &mut rng.fork())?),
        (Some(t), None, Some(p)) => Some(point_discovery_metrics(t, &read_graph(p)?)?),
        (Some(_), None, None) => {
            warnings.push("no checkpoint or adjacency given: discovery metrics skipped".to_string());
            None
        }
    };

    let mut scores = Vec::new();
    match cases {
        None => warnings.push("interventions.json missing: effect metrics skipped".to_string()),
        Some(file) => {
            let estimates: Option<Vec<EffectEstimate>> = match (&a.estimates, &ck) {
                (Some(p), _) => Some(serde_json::from_str(&fs::read_to_string(p)?)?),
                (None, Some(ck)) => {
                    let mut out = Vec::new();
                    for case in &file.cases {
                        let mut r = rng.fork();
                        out.push(estimate(
                            ck,
                            &ck.posterior,
                            &case.query(),
                            case.is_conditional(),
                            a.graphs,
                            a.samples_per_graph,
                            None,
                            &mut r,
                        )?);
                    }
                    Some(out)
                }
                (None, None) => {
                    warnings.push("no checkpoint or estimates given: effect metrics skipped".to_string());
                    None
                }
            };
            if let Some(est) = estimates {
                if est.len() != file.cases.len() {
                    return Err(DeciError::ShapeMismatch(format!(
                        "{} estimates for {} test cases",
                        est.len(),
                        file.cases.len()
                    )));
                }
                for (e, c) in est.iter().zip(&file.cases) {
                    warnings.extend(e.warnings.iter().cloned());
                    scores.push(CaseScore {
                        estimate: e.estimate.clone(),
                        ground_truth: c.ground_truth.clone(),
                        conditional: c.is_conditional(),
                    });
                }
            }
        }
    }
    let pooled = |conditional: bool| -> Result<Option<f64>> {
        let (mut e, mut t) = (Vec::new(), Vec::new());
        for s in scores.iter().filter(|s| s.conditional == conditional) {
            e.extend(&s.estimate);
            t.extend(&s.ground_truth);
        }
        if t.is_empty() {
            return Ok(None);
        }
        Ok(Some(if conditional { cate_rmse(&e, &t)? } else { ate_rmse(&e, &t)? }))
    };
    let report = EvalReport {
        discovery,
        ate_rmse: pooled(false)?,
        cate_rmse: pooled(true)?,
        cases: scores,
        warnings,
    };
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    write_output(a.out.as_deref(), &serde_json::to_string_pretty(&report)?)?;
    Ok(Outcome::Ok)
}

pub fn run(cli: &Cli) -> Result<Outcome> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(DeciError::Config("--threads must be positive".into()));
        }
        // fails only if a pool already exists, which is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    match &cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Train(a) => cmd_train(a),
        Command::Graph(a) => cmd_graph(a),
        Command::Ate(a) => cmd_effect(a, false),
        Command::Cate(a) => cmd_effect(a, true),
        Command::Eval(a) => cmd_eval(a),
    }
}

/// Parses `args`, runs the command and maps the outcome to an exit code:
/// 0 success, 1 usage or data error, 2 finished with warnings.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Warnings) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn overrides_parse_numbers_and_strings() {
        let text = apply_overrides("lr = 0.01\n", &["lr=0.005".into(), "noise=gaussian".into(), "batch_size=64".into()])
            .unwrap();
        let c = TrainConfig::from_toml(&text).unwrap();
        assert_eq!(c.lr, 0.005);
        assert_eq!(c.noise, NoiseKind::Gaussian);
        assert_eq!(c.batch_size, Some(64));
        assert!(apply_overrides("", &["nokey".into()]).is_err());
        assert!(TrainConfig::from_toml(&apply_overrides("", &["bogus=1".into()]).unwrap()).is_err());
    }

    #[test]
    fn compact_preset_yields_to_file_and_flags() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        fs::write(&p, "hidden_dim = 16\n").unwrap();
        let a = TrainArgs {
            data: dir.path().into(),
            out: dir.path().into(),
            config: Some(p),
            compact: true,
            noise: Some("gaussian".into()),
            seed: Some(9),
            overrides: vec!["lr=0.02".into()],
            fixed_graph: None,
        };
        let c = resolve_train_config(&a).unwrap();
        assert_eq!(c.hidden_dim, 16);
        assert_eq!(c.inner_max_steps, TrainConfig::compact().inner_max_steps);
        assert_eq!((c.noise, c.seed, c.lr), (NoiseKind::Gaussian, 9, 0.02));
    }
}
