//! Variational information bottleneck head.
//!
//! The encoder emits a diagonal Gaussian `w(z|x) = N(μ, diag σ²)`; a latent is
//! drawn as `z = μ + σ ⊙ ε` and classified, and the posterior is pulled toward
//! the standard-normal prior by `β·KL[w, r]`.

use crate::error::{ensure_finite, ensure_len, Error, Result};
use crate::losses::{compose_losses, LossConfig, LossOutput, Penalty};
use crate::rng::RngStream;

/// Added to `softplus(s)` so σ never reaches zero.
pub const SIGMA_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct LatentGaussian {
    mu: Vec<f64>,
    sigma: Vec<f64>,
}

impl LatentGaussian {
    pub fn new(mu: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        ensure_len("latent sigma", mu.len(), sigma.len())?;
        ensure_finite("latent mu", &mu)?;
        ensure_finite("latent sigma", &sigma)?;
        if let Some(i) = sigma.iter().position(|&s| s <= 0.0) {
            return Err(Error::invalid(format!("sigma[{i}] must be > 0")));
        }
        Ok(Self { mu, sigma })
    }

    /// Builds the posterior from the head's raw outputs, `σ = softplus(s) + floor`.
    pub fn from_raw(mu: Vec<f64>, raw_sigma: &[f64]) -> Result<Self> {
        let sigma = raw_sigma.iter().map(|&s| softplus(s) + SIGMA_FLOOR).collect();
        Self::new(mu, sigma)
    }

    pub fn standard(dim: usize) -> Self {
        Self {
            mu: vec![0.0; dim],
            sigma: vec![1.0; dim],
        }
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Derivative of [`softplus`].
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// A latent draw together with the noise that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentSample {
    pub z: Vec<f64>,
    pub noise: Vec<f64>,
}

pub fn reparameterize(g: &LatentGaussian, rng: &mut RngStream) -> LatentSample {
    let noise = rng.normal_vec(g.dim());
    reparameterize_with_noise(g, noise).expect("noise length matches by construction")
}

/// `z = μ + σ ⊙ ε` for a caller-chosen ε.
pub fn reparameterize_with_noise(g: &LatentGaussian, noise: Vec<f64>) -> Result<LatentSample> {
    ensure_len("reparameterization noise", g.dim(), noise.len())?;
    let z = g
        .mu
        .iter()
        .zip(&g.sigma)
        .zip(&noise)
        .map(|((m, s), e)| m + s * e)
        .collect();
    Ok(LatentSample { z, noise })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianKl {
    pub value: f64,
    pub grad_mu: Vec<f64>,
    pub grad_sigma: Vec<f64>,
}

/// `KL[N(μ, diag σ²) ‖ N(0, I)] = ½ Σ (μ² + σ² − 1 − ln σ²)`.
pub fn kl_gaussian_standard(g: &LatentGaussian) -> GaussianKl {
    let value = 0.5
        * g.mu
            .iter()
            .zip(&g.sigma)
            .map(|(m, s)| m * m + s * s - 1.0 - (s * s).ln())
            .sum::<f64>();
    GaussianKl {
        value,
        grad_mu: g.mu.clone(),
        grad_sigma: g.sigma.iter().map(|s| s - 1.0 / s).collect(),
    }
}

/// What the VIB term needs beyond the logits: the posterior, the sample the
/// logits came from, and a map from `∂L/∂logits` to `∂L/∂z` (the transpose of
/// the classifier's Jacobian).
pub struct LatentTerm<'a> {
    pub gaussian: &'a LatentGaussian,
    pub sample: &'a LatentSample,
    pub pull_back: &'a dyn Fn(&[f64]) -> Vec<f64>,
}

/// Adds `β·KL[w, r]` to `out` and fills the latent gradients, chaining the
/// logit gradient already in `out` through `z = μ + σ ⊙ ε`.
pub(crate) fn add_latent_terms(out: &mut LossOutput, term: &LatentTerm<'_>, beta: f64) -> Result<()> {
    let dim = term.gaussian.dim();
    ensure_len("latent sample", dim, term.sample.z.len())?;
    ensure_len("latent noise", dim, term.sample.noise.len())?;
    let grad_z = (term.pull_back)(&out.grad_logits);
    ensure_len("pulled-back latent gradient", dim, grad_z.len())?;

    let kl = kl_gaussian_standard(term.gaussian);
    out.loss += beta * kl.value;
    let grad_mu = grad_z
        .iter()
        .zip(&kl.grad_mu)
        .map(|(gz, gk)| gz + beta * gk)
        .collect();
    let grad_sigma = grad_z
        .iter()
        .zip(&term.sample.noise)
        .zip(&kl.grad_sigma)
        .map(|((gz, e), gk)| gz * e + beta * gk)
        .collect();
    out.grad_latent_mu = Some(grad_mu);
    out.grad_latent_sigma = Some(grad_sigma);
    Ok(())
}

/// `α·H(q, p̃) + β·KL[w, r]`, with `p̃` the prediction from the sampled latent.
pub fn vib_loss(logits: &[f64], target: usize, term: &LatentTerm<'_>, alpha: f64, beta: f64) -> Result<LossOutput> {
    let config = LossConfig::cross_entropy(alpha).with(Penalty::Vib { beta });
    compose_losses(&config, logits, target, Some(term))
}
