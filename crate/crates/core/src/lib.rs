pub mod cli;
pub mod data;
pub mod datagen;
pub mod error;
pub mod graph;
pub mod inference;
pub mod metrics;
pub mod sem;
pub mod training;

pub use error::{DeciError, Result};
