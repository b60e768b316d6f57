use crate::error::{Error, Result};
use crate::sparse::SparseVector;

/// `τ = (C/ξ)·λ·η`, where `ξ` is the number of rows touched by the batch.
pub fn truncation_threshold(num_classes: usize, xi: usize, lambda: f64, eta: f64) -> Result<f64> {
    if xi == 0 {
        return Err(Error::invalid("touched-row count must be >= 1"));
    }
    Ok(num_classes as f64 / xi as f64 * lambda * eta)
}

/// Soft-thresholds `w` at `τ = (C/ξ)·λ·η`; entries that reach zero are
/// dropped from storage.
pub fn truncate(
    w: &SparseVector,
    xi: usize,
    lambda: f64,
    eta: f64,
    num_classes: usize,
) -> Result<SparseVector> {
    let tau = truncation_threshold(num_classes, xi, lambda, eta)?;
    let mut out = w.clone();
    out.soft_threshold(tau);
    Ok(out)
}
