//! Numerical substrate: a dense reverse-mode autodiff tape, MLP blocks, Adam,
//! rational-quadratic splines, Gumbel-softmax sampling and seeded RNG streams.

pub mod adam;
pub mod gradcheck;
pub mod gumbel;
pub mod mlp;
pub mod params;
pub mod rng;
pub mod spline;
pub mod tape;

pub use adam::AdamState;
pub use mlp::MlpBlock;
pub use params::{Bound, Param, ParamId, ParamStore};
pub use rng::RngStream;
pub use spline::{RqSpline, SplineKnots};
pub use tape::{sigmoid, softplus, CustomOp, Gradients, Tape, Var};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("backward requires a scalar root, got a {0}x{1} matrix")]
    NonScalarRoot(usize, usize),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
}
