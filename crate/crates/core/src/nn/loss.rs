use super::tensor::{Matrix, Real};
use super::{NnError, Result};

/// Probabilities are clamped to `[BCE_CLAMP, 1 - BCE_CLAMP]` before the log.
pub const BCE_CLAMP: f64 = 1e-7;

/// Mean binary cross-entropy over every entry of `probs`.
pub fn bce_loss<T: Real>(probs: &Matrix<T>, labels: &Matrix<T>) -> Result<T> {
    if probs.rows() != labels.rows() || probs.cols() != labels.cols() {
        return Err(NnError::Dimension(format!(
            "probabilities {}x{} vs labels {}x{}",
            probs.rows(),
            probs.cols(),
            labels.rows(),
            labels.cols()
        )));
    }
    let total = probs.as_slice().len();
    if total == 0 {
        return Ok(T::zero());
    }
    let lo = BCE_CLAMP;
    let hi = 1.0 - BCE_CLAMP;
    let sum: f64 = probs
        .as_slice()
        .iter()
        .zip(labels.as_slice())
        .map(|(&p, &y)| {
            let p = p.to_f64().unwrap().clamp(lo, hi);
            let y = y.to_f64().unwrap();
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum();
    Ok(T::lit(sum / total as f64))
}
