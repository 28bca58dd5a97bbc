//! Fit DECI on a two-node dataset and inspect the learned graph posterior.
//!
//!     cargo run --release --example train_and_discover -- nonlingauss

use deci::datagen::generate_csuite;
use deci::metrics::expected_discovery_metrics;
use deci::training::{train, TrainConfig};
use deci_numerics::RngStream;

fn main() -> deci::Result<()> {
    let name = std::env::args().nth(1).unwrap_or_else(|| "nonlingauss".into());
    let (data, package) = generate_csuite(&name, 0)?;

    let out = train(&data, &TrainConfig::compact().with_seed(0))?;
    let d = &out.diagnostics;
    println!(
        "{} outer steps, final E[h(G)] {:.2e}, final ELBO {:.3}",
        d.outer_steps,
        d.final_penalty,
        d.final_elbo().unwrap_or(f64::NAN)
    );

    let posterior = &out.checkpoint.posterior;
    println!("edge probabilities:\n{:.3}", posterior.edge_probabilities());
    let (mode, _) = posterior.mode();
    println!("mode {:?}, truth {:?}", mode.edges(), package.graph().edges());

    let m = expected_discovery_metrics(package.graph(), posterior, 100, &mut RngStream::new(1))?;
    println!(
        "adjacency F1 {:.3}, orientation F1 {:.3}, causal accuracy {:.3}",
        m.adjacency_f1.mean, m.orientation_f1.mean, m.causal_accuracy.mean
    );
    Ok(())
}
