//! Stable softmax primitives and the central-difference gradient checker.

use crate::error::{ensure_finite, Error, Result};

fn validate_logits(logits: &[f64]) -> Result<()> {
    if logits.is_empty() {
        return Err(Error::invalid("logit vector is empty"));
    }
    ensure_finite("logits", logits)
}

/// `ln Σ exp(zᵢ)` in the max-subtracted form.
pub fn logsumexp(logits: &[f64]) -> Result<f64> {
    validate_logits(logits)?;
    Ok(logsumexp_unchecked(logits))
}

pub(crate) fn logsumexp_unchecked(logits: &[f64]) -> f64 {
    let (max, tail) = split_logsumexp(logits);
    max + tail
}

/// `(m, t)` with `logsumexp(z) = m + t`, `m = max z`. The maximal entry
/// contributes exactly 1 to the sum, so `t` comes from `ln_1p` and stays
/// accurate when the other terms are tiny.
pub(crate) fn split_logsumexp(logits: &[f64]) -> (f64, f64) {
    let (arg, max) = logits
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, z)| if z > acc.1 { (i, z) } else { acc });
    let rest: f64 = logits
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != arg)
        .map(|(_, z)| (z - max).exp())
        .sum();
    (max, rest.ln_1p())
}

pub fn log_softmax(logits: &[f64]) -> Result<Vec<f64>> {
    validate_logits(logits)?;
    let (max, tail) = split_logsumexp(logits);
    Ok(logits.iter().map(|z| (z - max) - tail).collect())
}

pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    validate_logits(logits)?;
    Ok(softmax_unchecked(logits))
}

pub(crate) fn softmax_unchecked(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for p in &mut out {
        *p /= sum;
    }
    out
}

/// Central differences `(f(x + h eᵢ) − f(x − h eᵢ)) / 2h` for every coordinate.
pub fn finite_diff_grad<F>(mut f: F, x: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::invalid(format!("step size must be positive, got {h}")));
    }
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let plus = f(&probe);
        probe[i] = orig - h;
        let minus = f(&probe);
        probe[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite {
                context: "finite-difference evaluation",
                index: i,
            });
        }
        grad.push((plus - minus) / (2.0 * h));
    }
    Ok(grad)
}

/// Norm-wise relative error `‖a − b‖₂ / max(‖a‖₂, ‖b‖₂)`; zero when both vectors vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "relative_error on unequal lengths");
    let diff = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn check_finite(context: &'static str, values: &[f64]) -> Result<()> {
    ensure_finite(context, values)
}
