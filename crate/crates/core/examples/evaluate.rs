//! Score a trained model on a synthetic ER graph with missing values:
//! discovery metrics over posterior samples and ATE error on the stored cases.
//!
//!     cargo run --release --example evaluate

use deci::datagen::{apply_mcar_mask, simulate_anm, GraphFamily, NoiseFamily, SyntheticSpec};
use deci::inference::{estimate_ate, AteConfig};
use deci::metrics::{ate_rmse, expected_discovery_metrics};
use deci::training::{train, TrainConfig};
use deci_numerics::RngStream;

fn main() -> deci::Result<()> {
    let spec = SyntheticSpec::new(GraphFamily::Er, 5, 5, NoiseFamily::Gaussian, 3);
    let mut rng = RngStream::new(3);
    let graph = spec.sample_graph(&mut rng)?;
    let (data, package) = simulate_anm(&graph, &spec, &mut rng)?;
    let data = apply_mcar_mask(&data, 0.1, &mut RngStream::with_stream(3, 7))?;
    println!("{}: {:.1}% of cells missing", spec.name(), 100.0 * data.missing_fraction());

    let ck = train(&data, &TrainConfig::compact())?.checkpoint;
    let m = expected_discovery_metrics(package.graph(), &ck.posterior, 100, &mut RngStream::new(0))?;
    println!(
        "adjacency F1 {:.3} +- {:.3}, orientation F1 {:.3} +- {:.3}, {} cyclic samples",
        m.adjacency_f1.mean, m.adjacency_f1.std, m.orientation_f1.mean, m.orientation_f1.std, m.cyclic_samples
    );

    let (mut est, mut truth) = (Vec::new(), Vec::new());
    for case in package.cases.iter().filter(|c| !c.is_conditional()) {
        let q = case.query().resolve(&ck.model.specs)?;
        est.extend(estimate_ate(&ck.model, &ck.posterior, &q, &AteConfig::default(), &mut RngStream::new(1))?.estimate);
        truth.extend(case.ground_truth.iter().cloned());
    }
    println!("ATE RMSE over {} cases: {:.3}", truth.len(), ate_rmse(&est, &truth)?);
    Ok(())
}
