//! Treatment-effect estimation from a fitted model and graph posterior.

pub mod ate;
pub mod cate;
pub mod query;
pub mod rff;

pub use ate::{estimate_ate, AteConfig};
pub use cate::{estimate_cate, CateConfig};
pub use query::{CausalQuery, EffectEstimate, QuerySpec};
pub use rff::{fit_rff_surrogate, fit_shared, RffFeatures, RffSurrogate};
