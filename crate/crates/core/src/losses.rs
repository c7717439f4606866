//! Cross-entropy regularized by a KL divergence to the uniform distribution.
//!
//! Every loss here has the shape `α·H(q, p) + β·KL`, where `p = softmax(z)`
//! and `q` is the (possibly smoothed) ground truth. Label smoothing takes the
//! forward divergence `KL[u, p]`, which folds into a cross-entropy against the
//! smoothed target `q_LS`. The confidence penalty takes the reverse divergence
//! `KL[p, u] = ln C − H(p)` and is implemented as `α·H(q, p) − β·H(p)`, i.e.
//! without the constant `β ln C`. Gradients are with respect to the logits.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::numerics::{softmax_unchecked, split_logsumexp};
use crate::vib::{self, LatentTerm};

/// Tolerance on `Σ p = 1` for caller-supplied probability vectors.
pub const PROBABILITY_SUM_TOLERANCE: f64 = 1e-9;

/// Label-smoothing strength used when a config does not give one.
pub const DEFAULT_LABEL_SMOOTHING_BETA: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Penalty {
    LabelSmoothing {
        #[serde(default = "default_ls_beta")]
        beta: f64,
    },
    ConfidencePenalty {
        beta: f64,
    },
    Vib {
        beta: f64,
    },
}

fn default_ls_beta() -> f64 {
    DEFAULT_LABEL_SMOOTHING_BETA
}

impl Penalty {
    pub fn beta(&self) -> f64 {
        match *self {
            Penalty::LabelSmoothing { beta }
            | Penalty::ConfidencePenalty { beta }
            | Penalty::Vib { beta } => beta,
        }
    }

    pub fn short_name(&self) -> &'static str {
        match self {
            Penalty::LabelSmoothing { .. } => "ls",
            Penalty::ConfidencePenalty { .. } => "cp",
            Penalty::Vib { .. } => "vib",
        }
    }
}

/// Loss configuration: one cross-entropy pre-factor plus any set of penalties.
///
/// An empty penalty list is plain cross-entropy. At most one penalty of each
/// kind may be present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub penalties: Vec<Penalty>,
}

fn default_alpha() -> f64 {
    1.0
}

impl Default for LossConfig {
    fn default() -> Self {
        Self::cross_entropy(1.0)
    }
}

impl LossConfig {
    pub fn cross_entropy(alpha: f64) -> Self {
        Self {
            alpha,
            penalties: Vec::new(),
        }
    }

    pub fn with(mut self, penalty: Penalty) -> Self {
        self.penalties.push(penalty);
        self
    }

    pub fn label_smoothing_beta(&self) -> Option<f64> {
        self.penalties.iter().find_map(|p| match *p {
            Penalty::LabelSmoothing { beta } => Some(beta),
            _ => None,
        })
    }

    pub fn confidence_penalty_beta(&self) -> Option<f64> {
        self.penalties.iter().find_map(|p| match *p {
            Penalty::ConfidencePenalty { beta } => Some(beta),
            _ => None,
        })
    }

    pub fn vib_beta(&self) -> Option<f64> {
        self.penalties.iter().find_map(|p| match *p {
            Penalty::Vib { beta } => Some(beta),
            _ => None,
        })
    }

    pub fn uses_vib(&self) -> bool {
        self.vib_beta().is_some()
    }

    /// `xent`, `ls`, `cp+vib`, ...
    pub fn name(&self) -> String {
        if self.penalties.is_empty() {
            return "xent".to_string();
        }
        self.penalties
            .iter()
            .map(Penalty::short_name)
            .collect::<Vec<_>>()
            .join("+")
    }

    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        let mut seen = [false; 3];
        for p in &self.penalties {
            let slot = match p {
                Penalty::LabelSmoothing { beta } => {
                    check_smoothing_beta(*beta)?;
                    0
                }
                Penalty::ConfidencePenalty { beta } | Penalty::Vib { beta } => {
                    check_beta(*beta)?;
                    if matches!(p, Penalty::Vib { .. }) {
                        2
                    } else {
                        1
                    }
                }
            };
            if seen[slot] {
                return Err(Error::Config(format!(
                    "penalty `{}` listed more than once",
                    p.short_name()
                )));
            }
            seen[slot] = true;
        }
        Ok(())
    }
}

/// A probability vector over the classes.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetDistribution(Vec<f64>);

impl TargetDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        validate_probabilities(&probs)?;
        Ok(Self(probs))
    }

    pub fn uniform(num_classes: usize) -> Self {
        Self(vec![1.0 / num_classes as f64; num_classes])
    }

    pub fn one_hot(target: usize, num_classes: usize) -> Result<Self> {
        check_target(target, num_classes)?;
        let mut probs = vec![0.0; num_classes];
        probs[target] = 1.0;
        Ok(Self(probs))
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Loss value with its gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub loss: f64,
    pub grad_logits: Vec<f64>,
    /// Gradient with respect to the latent mean (VIB only).
    pub grad_latent_mu: Option<Vec<f64>>,
    /// Gradient with respect to the latent standard deviation (VIB only).
    pub grad_latent_sigma: Option<Vec<f64>>,
    /// Entropy of the predicted distribution `softmax(z)`.
    pub predicted_entropy: f64,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::invalid(format!("alpha must be finite and >= 0, got {alpha}")));
    }
    Ok(())
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::invalid(format!("beta must be finite and >= 0, got {beta}")));
    }
    Ok(())
}

fn check_smoothing_beta(beta: f64) -> Result<()> {
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::invalid(format!(
            "label-smoothing beta must lie in [0, 1), got {beta}"
        )));
    }
    Ok(())
}

fn check_target(target: usize, num_classes: usize) -> Result<()> {
    if target >= num_classes {
        return Err(Error::invalid(format!(
            "target class {target} out of range for {num_classes} classes"
        )));
    }
    Ok(())
}

fn check_logits(logits: &[f64]) -> Result<()> {
    if logits.len() < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 classes, got {}",
            logits.len()
        )));
    }
    ensure_finite("logits", logits)
}

fn validate_probabilities(p: &[f64]) -> Result<()> {
    if p.is_empty() {
        return Err(Error::invalid("probability vector is empty"));
    }
    ensure_finite("probabilities", p)?;
    if let Some(i) = p.iter().position(|&v| v < 0.0) {
        return Err(Error::invalid(format!("negative probability at index {i}")));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > PROBABILITY_SUM_TOLERANCE {
        return Err(Error::invalid(format!("probabilities sum to {sum}, not 1")));
    }
    Ok(())
}

/// `−Σ p ln p` with `0 ln 0 = 0`.
pub fn entropy(probs: &[f64]) -> Result<f64> {
    validate_probabilities(probs)?;
    Ok(entropy_unchecked(probs))
}

fn entropy_unchecked(probs: &[f64]) -> f64 {
    -probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum::<f64>()
}

/// `KL[p, q] = Σ p ln(p / q)`. A zero in `q` where `p > 0` is an error.
pub fn kl_categorical(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::ShapeMismatch {
            context: "kl_categorical",
            expected: p.len(),
            actual: q.len(),
        });
    }
    validate_probabilities(p)?;
    validate_probabilities(q)?;
    let mut kl = 0.0;
    for (i, (&pi, &qi)) in p.iter().zip(q).enumerate() {
        if pi > 0.0 {
            if qi == 0.0 {
                return Err(Error::invalid(format!(
                    "KL divergence is infinite: q[{i}] = 0 while p[{i}] = {pi}"
                )));
            }
            kl += pi * (pi / qi).ln();
        }
    }
    Ok(kl)
}

/// `q_LS`: `1 − (C−1)β/C` on the true class and `β/C` elsewhere.
pub fn smooth_labels(target: usize, num_classes: usize, beta: f64) -> Result<TargetDistribution> {
    check_smoothing_beta(beta)?;
    check_target(target, num_classes)?;
    let c = num_classes as f64;
    let off = beta / c;
    let mut probs = vec![off; num_classes];
    probs[target] = 1.0 - (c - 1.0) * beta / c;
    Ok(TargetDistribution(probs))
}

/// `α·H(q, p)` for an arbitrary target distribution `q`.
pub fn soft_cross_entropy(logits: &[f64], target: &TargetDistribution, alpha: f64) -> Result<LossOutput> {
    check_logits(logits)?;
    check_alpha(alpha)?;
    if target.len() != logits.len() {
        return Err(Error::ShapeMismatch {
            context: "soft_cross_entropy target",
            expected: logits.len(),
            actual: target.len(),
        });
    }
    Ok(soft_xent_unchecked(logits, target.probs(), alpha))
}

fn soft_xent_unchecked(logits: &[f64], q: &[f64], alpha: f64) -> LossOutput {
    let (max, tail) = split_logsumexp(logits);
    let p = softmax_unchecked(logits);
    // H(q, p) = Σ q (lse − z), using Σ q = 1
    let h: f64 = q.iter().zip(logits).map(|(qi, zi)| qi * ((max - zi) + tail)).sum();
    let grad_logits = p.iter().zip(q).map(|(pi, qi)| alpha * (pi - qi)).collect();
    LossOutput {
        loss: alpha * h,
        grad_logits,
        grad_latent_mu: None,
        grad_latent_sigma: None,
        predicted_entropy: entropy_unchecked(&p),
    }
}

/// `α·(logsumexp(z) − z_target)`.
pub fn cross_entropy(logits: &[f64], target: usize, alpha: f64) -> Result<LossOutput> {
    check_logits(logits)?;
    check_target(target, logits.len())?;
    let onehot = TargetDistribution::one_hot(target, logits.len())?;
    soft_cross_entropy(logits, &onehot, alpha)
}

/// `α·H(q_LS, p)`.
pub fn label_smoothing_loss(logits: &[f64], target: usize, alpha: f64, beta: f64) -> Result<LossOutput> {
    check_logits(logits)?;
    let q = smooth_labels(target, logits.len(), beta)?;
    soft_cross_entropy(logits, &q, alpha)
}

/// Adds `−β·H(p)` and its logit gradient `β·p ⊙ (ln p + H)` to `out`.
fn add_entropy_penalty(out: &mut LossOutput, logits: &[f64], beta: f64) {
    let p = softmax_unchecked(logits);
    let log_p: Vec<f64> = {
        let (max, tail) = split_logsumexp(logits);
        logits.iter().map(|z| (z - max) - tail).collect()
    };
    let h = -p.iter().zip(&log_p).map(|(pi, lpi)| pi * lpi).sum::<f64>();
    out.loss -= beta * h;
    for ((g, pi), lpi) in out.grad_logits.iter_mut().zip(&p).zip(&log_p) {
        *g += beta * pi * (lpi + h);
    }
}

/// `α·H(q, p) − β·H(p)`.
pub fn confidence_penalty_loss(logits: &[f64], target: usize, alpha: f64, beta: f64) -> Result<LossOutput> {
    check_beta(beta)?;
    let mut out = cross_entropy(logits, target, alpha)?;
    add_entropy_penalty(&mut out, logits, beta);
    Ok(out)
}

/// Sum of the enabled terms with a single cross-entropy.
///
/// The cross-entropy term is `α·H(q', p)` where `q'` is the smoothed target
/// when label smoothing is enabled and the one-hot target otherwise; each other
/// penalty adds its own β-scaled term. A VIB penalty requires `latent`, and its
/// latent gradients pull back the *total* logit gradient through `z`.
pub fn compose_losses(
    config: &LossConfig,
    logits: &[f64],
    target: usize,
    latent: Option<&LatentTerm<'_>>,
) -> Result<LossOutput> {
    config.validate()?;
    check_logits(logits)?;
    check_target(target, logits.len())?;

    let q = match config.label_smoothing_beta() {
        Some(beta) => smooth_labels(target, logits.len(), beta)?,
        None => TargetDistribution::one_hot(target, logits.len())?,
    };
    let mut out = soft_xent_unchecked(logits, q.probs(), config.alpha);

    if let Some(beta) = config.confidence_penalty_beta() {
        add_entropy_penalty(&mut out, logits, beta);
    }

    match (config.vib_beta(), latent) {
        (Some(beta), Some(term)) => vib::add_latent_terms(&mut out, term, beta)?,
        (Some(_), None) => {
            return Err(Error::Config(
                "VIB penalty requires a latent Gaussian input".into(),
            ))
        }
        (None, _) => {}
    }
    Ok(out)
}
