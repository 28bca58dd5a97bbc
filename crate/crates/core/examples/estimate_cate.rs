//! Conditional effect on a known linear-Gaussian SEM, where the answer is
//! available in closed form.

use deci::data::VariableSpec;
use deci::datagen::{GroundTruthSem, NodeEquation, NoiseDist};
use deci::graph::AdjacencyMatrix;
use deci::inference::{estimate_cate, CateConfig, CausalQuery};
use deci_numerics::RngStream;

fn main() -> deci::Result<()> {
    // z -> t -> y, z -> y
    let specs = ["z", "t", "y"].map(VariableSpec::continuous).to_vec();
    let graph = AdjacencyMatrix::from_edges(3, &[(0, 1), (0, 2), (1, 2)])?;
    let sem = GroundTruthSem::new(
        specs,
        graph.clone(),
        vec![
            NodeEquation::root(NoiseDist::Normal { scale: 1.0 }),
            NodeEquation::additive(|x| 0.8 * x[0], NoiseDist::Normal { scale: 0.5 }),
            NodeEquation::additive(|x| 1.5 * x[1] - 0.7 * x[0], NoiseDist::Normal { scale: 0.5 }),
        ],
    )?;

    // E[y | do(t = 1), z = 0.5] - E[y | do(t = 0), z = 0.5] = 1.5
    let query = CausalQuery::cate(1, 1.0, 0.0, 2, 0, 0.5);
    let est = estimate_cate(&sem, &graph, &query, &CateConfig::default(), &mut RngStream::new(0))?;
    println!("CATE estimate {:.4} (exact 1.5)", est.estimate[0]);
    for w in &est.warnings {
        println!("warning: {w}");
    }
    Ok(())
}
