//! Variational training of the model and graph posterior.

pub mod auglag;
pub mod config;
pub mod elbo;
pub mod imputer;
pub mod train;

pub use auglag::AugLagState;
pub use config::TrainConfig;
pub use elbo::{elbo_estimate, elbo_missing, ElboParts, Imputation};
pub use imputer::ImputationNetwork;
pub use train::{train, train_fixed_graph, train_with_prior, DiagnosticRecord, Diagnostics, TrainOutput, DAG_TOLERANCE};
