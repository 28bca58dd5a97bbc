//! Missing-completely-at-random masking.

use deci_numerics::RngStream;

use crate::data::Dataset;
use crate::error::{DeciError, Result};

/// Masks each continuous cell independently with probability `rate`.
/// Discrete columns stay observed.
pub fn apply_mcar_mask(data: &Dataset, rate: f64, rng: &mut RngStream) -> Result<Dataset> {
    if !(0.0..1.0).contains(&rate) {
        return Err(DeciError::InvalidData(format!("mask rate {rate} outside [0, 1)")));
    }
    let maskable: Vec<usize> = (0..data.n_vars()).filter(|&i| data.specs[i].kind.is_continuous()).collect();
    let mut values = data.values.clone();
    for mut row in values.rows_mut() {
        for &c in &maskable {
            if rng.bernoulli(rate) {
                row[c] = f64::NAN;
            }
        }
    }
    Dataset::new(data.specs.clone(), values)
}
