use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Probabilities are clamped to `[BCE_EPS, 1 - BCE_EPS]` before the log.
pub const BCE_EPS: f64 = 1e-7;

#[inline]
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Mean over rows of the per-row L1 norm, and its (sub)gradient.
///
/// The subgradient of `|r|` at `r = 0` is taken to be 0.
pub fn l1_loss(residuals: &Matrix) -> Result<(f64, Matrix)> {
    let n = residuals.rows();
    if n == 0 {
        return Err(Error::EmptyInput("L1 loss over an empty batch".into()));
    }
    let inv = 1.0 / n as f64;
    let total: f64 = residuals.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).sum();
    let grad = residuals.map(|v| sign(v) * inv);
    Ok((total * inv, grad))
}

/// Mean binary cross-entropy over samples.
///
/// The gradient is evaluated at the clamped probability and reported with
/// respect to the unclamped input (the clamp is treated as the identity).
pub fn bce_loss(probabilities: &[f64], labels: &[f64]) -> Result<(f64, Vec<f64>)> {
    if probabilities.len() != labels.len() {
        return Err(Error::shape(format!(
            "{} probabilities but {} labels",
            probabilities.len(),
            labels.len()
        )));
    }
    let n = probabilities.len();
    if n == 0 {
        return Err(Error::EmptyInput("BCE loss over an empty batch".into()));
    }
    let inv = 1.0 / n as f64;
    let mut total = 0.0;
    let grad = probabilities
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
            total -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
            (-y / p + (1.0 - y) / (1.0 - p)) * inv
        })
        .collect();
    Ok((total * inv, grad))
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}
