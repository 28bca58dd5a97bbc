//! Synthetic benchmark generation.

pub mod anm;
pub mod csuite;
pub mod graphs;
pub mod hmc;
pub mod mcar;
pub mod package;
pub mod truth;

pub use anm::{simulate_anm, GraphFamily, NoiseFamily, SyntheticSpec};
pub use csuite::{generate_csuite, CSUITE_NAMES};
pub use graphs::{sample_er_graph, sample_sf_graph};
pub use hmc::{hmc_conditional_samples, HmcConfig, HmcOutput};
pub use mcar::apply_mcar_mask;
pub use package::{
    ground_truth_case, read_interventions, read_true_graph, write_dataset_dir, GroundTruthPackage, InterventionCase,
    InterventionFile, GROUND_TRUTH_SAMPLES,
};
pub use truth::{GroundTruthSem, MlpNoise, NodeEquation, NoiseDist};
