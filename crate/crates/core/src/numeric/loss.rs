//! Activations and loss functions with their analytic gradients.

use crate::error::{Error, Result};
use crate::numeric::Matrix;

/// Numerically stable logistic function.
///
/// Split by sign so the exponential never overflows: exp(z)/(1+exp(z))
/// for z < 0 and 1/(1+exp(-z)) otherwise. Saturated outputs are pinned
/// to the nearest representable values inside the interval, so results
/// stay strictly within (0, 1) for every finite input while remaining
/// within one ulp of the exact limit.
pub fn sigmoid_scalar(z: f64) -> f64 {
    let s = if z < 0.0 {
        let e = z.exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + (-z).exp())
    };
    s.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

/// Elementwise sigmoid.
pub fn sigmoid(z: &Matrix) -> Matrix {
    z.map(sigmoid_scalar)
}

/// Elementwise sigmoid derivative expressed through the activation:
/// sigma'(z) = s (1 - s) where s = sigma(z).
pub fn sigmoid_prime_from_output(s: &Matrix) -> Matrix {
    s.map(|v| v * (1.0 - v))
}

/// Checks that every label row is exactly one-hot (entries 0 or 1,
/// exactly one 1).
fn validate_one_hot(labels: &Matrix) -> Result<()> {
    for i in 0..labels.rows() {
        let row = labels.row(i);
        let ones = row.iter().filter(|&&v| v == 1.0).count();
        let zeros = row.iter().filter(|&&v| v == 0.0).count();
        if ones != 1 || ones + zeros != row.len() {
            return Err(Error::MalformedLabels(format!(
                "row {i} is not one-hot: {row:?}"
            )));
        }
    }
    Ok(())
}

/// Row-wise softmax cross-entropy against one-hot labels.
///
/// Softmax uses max-subtraction so large logits cannot overflow. Returns
/// the mean of -log p[true] over rows and the gradient with respect to
/// the logits, (softmax - labels) / rows.
pub fn softmax_xent(logits: &Matrix, labels: &Matrix) -> Result<(f64, Matrix)> {
    if logits.shape() != labels.shape() {
        return Err(Error::shape("softmax_xent", logits.shape(), labels.shape()));
    }
    validate_one_hot(labels)?;
    let n = logits.rows();
    let mut grad = Matrix::zeros(n, logits.cols());
    let mut loss = 0.0;
    for i in 0..n {
        let row = logits.row(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for &v in row {
            denom += (v - max).exp();
        }
        let log_denom = denom.ln();
        for (j, &v) in row.iter().enumerate() {
            let log_p = (v - max) - log_denom;
            let p = log_p.exp();
            let y = labels.get(i, j);
            grad.set(i, j, (p - y) / n as f64);
            if y == 1.0 {
                loss -= log_p;
            }
        }
    }
    Ok((loss / n as f64, grad))
}

/// Mean squared error over all elements, with its gradient
/// 2 (recon - target) / count.
pub fn mse_loss(recon: &Matrix, target: &Matrix) -> Result<(f64, Matrix)> {
    if recon.shape() != target.shape() {
        return Err(Error::shape("mse_loss", recon.shape(), target.shape()));
    }
    let count = (recon.rows() * recon.cols()) as f64;
    let mut loss = 0.0;
    let mut grad = Matrix::zeros(recon.rows(), recon.cols());
    for i in 0..recon.rows() {
        for (j, (&r, &t)) in recon.row(i).iter().zip(target.row(i)).enumerate() {
            let d = r - t;
            loss += d * d;
            grad.set(i, j, 2.0 * d / count);
        }
    }
    Ok((loss / count, grad))
}
