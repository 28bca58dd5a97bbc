//! Average treatment effects from a model trained with the true graph held fixed,
//! compared against the dataset's interventional ground truth.
//!
//!     cargo run --release --example estimate_ate -- large_backdoor

use deci::datagen::generate_csuite;
use deci::inference::{estimate_ate, AteConfig};
use deci::training::{train_fixed_graph, TrainConfig};
use deci_numerics::RngStream;

fn main() -> deci::Result<()> {
    let name = std::env::args().nth(1).unwrap_or_else(|| "large_backdoor".into());
    let (data, package) = generate_csuite(&name, 0)?;
    let ck = train_fixed_graph(&data, &TrainConfig::compact(), package.graph())?.checkpoint;

    let mut rng = RngStream::new(0);
    for case in package.cases.iter().filter(|c| !c.is_conditional()) {
        let query = case.query().resolve(&ck.model.specs)?;
        let est = estimate_ate(&ck.model, &ck.posterior, &query, &AteConfig::default(), &mut rng)?;
        for ((label, e), truth) in est.labels.iter().zip(&est.estimate).zip(&case.ground_truth) {
            println!("{label}: estimate {e:+.4}, truth {truth:+.4}");
        }
    }
    Ok(())
}
