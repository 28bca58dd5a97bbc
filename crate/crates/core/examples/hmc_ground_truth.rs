//! Draw conditional samples from a ground-truth SEM with HMC and compare the
//! posterior mean to Gaussian conditioning.

use deci::data::VariableSpec;
use deci::datagen::{hmc_conditional_samples, GroundTruthSem, HmcConfig, NodeEquation, NoiseDist};
use deci::graph::AdjacencyMatrix;
use deci_numerics::RngStream;

fn main() -> deci::Result<()> {
    let specs = ["a", "b"].map(VariableSpec::continuous).to_vec();
    let graph = AdjacencyMatrix::from_edges(2, &[(0, 1)])?;
    let sem = GroundTruthSem::new(
        specs,
        graph,
        vec![
            NodeEquation::root(NoiseDist::Normal { scale: 1.0 }),
            NodeEquation::additive(|x| 2.0 * x[0], NoiseDist::Normal { scale: 1.0 }),
        ],
    )?;

    // a | b = 1: mean 2 / 5 = 0.4, variance 1 / 5
    let out = hmc_conditional_samples(&sem, &[], &[(1, 1.0)], &HmcConfig::default(), &mut RngStream::new(0))?;
    let a = out.samples.column(0);
    let mean = a.mean().unwrap_or(f64::NAN);
    let var = a.mapv(|v| (v - mean).powi(2)).mean().unwrap_or(f64::NAN);
    println!("{} samples, acceptance {:.2}, step size {:.3}", a.len(), out.acceptance_rate, out.step_size);
    println!("mean {mean:.4} (exact 0.4), variance {var:.4} (exact 0.2)");
    Ok(())
}
