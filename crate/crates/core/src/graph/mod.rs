//! DAG machinery: adjacency matrices, the acyclicity penalty, the graph prior
//! and the factorized variational posterior.

pub mod adjacency;
pub mod penalty;
pub mod posterior;
pub mod prior;

pub use adjacency::{read_matrix_csv, write_matrix_csv, AdjacencyMatrix};
pub use penalty::{dag_penalty, dag_penalty_var, expm};
pub use posterior::{pair_list, sample_dags, DagDraws, GraphDistribution, VariationalGraphPosterior};
pub use prior::GraphPrior;
