//! Finite-difference verification of every analytic gradient.
//!
//! Loss cases compare the logit gradient (or, with a VIB term, the gradient
//! with respect to μ and σ through a fixed linear classifier and frozen noise)
//! on random instances. End-to-end cases compare all parameter gradients of a
//! two-layer tanh network on a three-class batch.

use serde::Serialize;

use crate::error::Result;
use crate::losses::{compose_losses, LossConfig, Penalty};
use crate::model::{init_model, Activation, ClassifierHead, ModelSpec, Network};
use crate::numerics::{finite_diff_grad, relative_error};
use crate::rng::RngStream;
use crate::train::{sample_loss, Noise};
use crate::vib::{reparameterize_with_noise, LatentGaussian, LatentTerm};

pub const LOSS_TOLERANCE: f64 = 1e-6;
pub const END_TO_END_TOLERANCE: f64 = 1e-5;
const STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseKind {
    Loss,
    EndToEnd,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseResult {
    pub name: String,
    pub kind: CaseKind,
    pub instances: usize,
    pub max_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckOptions {
    /// Keep cases whose name, or one of its `+`/`/`-separated parts, equals this.
    pub only: Option<String>,
    pub loss_instances: usize,
    pub end_to_end_instances: usize,
    pub seed: u64,
    /// Negate every analytic gradient; for testing that failures are caught.
    pub inject_sign_fault: bool,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        Self {
            only: None,
            loss_instances: 200,
            end_to_end_instances: 3,
            seed: 0,
            inject_sign_fault: false,
        }
    }
}

/// The penalty combinations checked, by name.
pub fn variants() -> Vec<(&'static str, Vec<&'static str>)> {
    vec![
        ("xent", vec![]),
        ("ls", vec!["ls"]),
        ("cp", vec!["cp"]),
        ("vib", vec!["vib"]),
        ("ls+cp", vec!["ls", "cp"]),
        ("vib+ls", vec!["vib", "ls"]),
        ("vib+cp", vec!["vib", "cp"]),
        ("vib+ls+cp", vec!["vib", "ls", "cp"]),
    ]
}

fn random_config(parts: &[&str], rng: &mut RngStream) -> LossConfig {
    let mut c = LossConfig::cross_entropy(rng.uniform_range(0.5, 2.0));
    for p in parts {
        c = c.with(match *p {
            "ls" => Penalty::LabelSmoothing { beta: rng.uniform_range(0.0, 0.9) },
            "cp" => Penalty::ConfidencePenalty { beta: rng.uniform_range(0.0, 1.0) },
            "vib" => Penalty::Vib { beta: rng.uniform_range(0.0, 1.0) },
            other => unreachable!("unknown penalty {other}"),
        });
    }
    c
}

fn selected(name: &str, only: Option<&str>) -> bool {
    match only {
        None => true,
        Some(f) => name == f || name.split(['+', '/']).any(|part| part == f),
    }
}

fn flip(v: Vec<f64>, fault: bool) -> Vec<f64> {
    if fault {
        v.into_iter().map(|x| -x).collect()
    } else {
        v
    }
}

fn loss_case(parts: &[&str], rng: &mut RngStream, fault: bool) -> Result<f64> {
    let config = random_config(parts, rng);
    let classes = 2 + rng.next_index(9);
    let target = rng.next_index(classes);
    if !config.uses_vib() {
        let logits: Vec<f64> = (0..classes).map(|_| rng.uniform_range(-3.0, 3.0)).collect();
        let analytic = compose_losses(&config, &logits, target, None)?.grad_logits;
        let numeric = finite_diff_grad(|z| compose_losses(&config, z, target, None).map_or(f64::NAN, |o| o.loss), &logits, STEP)?;
        return Ok(relative_error(&flip(analytic, fault), &numeric));
    }

    let dim = 1 + rng.next_index(6);
    let w: Vec<Vec<f64>> = (0..classes).map(|_| (0..dim).map(|_| rng.uniform_range(-1.0, 1.0)).collect()).collect();
    let b: Vec<f64> = (0..classes).map(|_| rng.uniform_range(-0.5, 0.5)).collect();
    let noise = rng.normal_vec(dim);
    let head = |z: &[f64]| -> Vec<f64> {
        w.iter()
            .zip(&b)
            .map(|(row, bi)| row.iter().zip(z).map(|(a, x)| a * x).sum::<f64>() + bi)
            .collect()
    };
    let pull_back = |g: &[f64]| -> Vec<f64> { (0..dim).map(|d| w.iter().zip(g).map(|(row, gi)| row[d] * gi).sum()).collect() };
    let eval = |theta: &[f64]| -> Result<(f64, Vec<f64>)> {
        let gaussian = LatentGaussian::new(theta[..dim].to_vec(), theta[dim..].to_vec())?;
        let sample = reparameterize_with_noise(&gaussian, noise.clone())?;
        let term = LatentTerm {
            gaussian: &gaussian,
            sample: &sample,
            pull_back: &pull_back,
        };
        let out = compose_losses(&config, &head(&sample.z), target, Some(&term))?;
        let mut grad = out.grad_latent_mu.unwrap_or_default();
        grad.extend(out.grad_latent_sigma.unwrap_or_default());
        Ok((out.loss, grad))
    };
    let mut theta: Vec<f64> = (0..dim).map(|_| rng.uniform_range(-2.0, 2.0)).collect();
    theta.extend((0..dim).map(|_| rng.uniform_range(0.3, 3.0)));
    let (_, analytic) = eval(&theta)?;
    let numeric = finite_diff_grad(|t| eval(t).map_or(f64::NAN, |r| r.0), &theta, STEP)?;
    Ok(relative_error(&flip(analytic, fault), &numeric))
}

fn end_to_end_case(parts: &[&str], rng: &mut RngStream, fault: bool) -> Result<f64> {
    let config = random_config(parts, rng);
    let spec = ModelSpec {
        layer_sizes: vec![4, 6, 5],
        activation: Activation::Tanh,
        latent_dim: config.uses_vib().then_some(3),
    };
    let net = Network::new(
        init_model(&spec, rng.next_index(1 << 30) as u64)?,
        ClassifierHead::init(spec.embedding_dim(), 3, rng.next_index(1 << 30) as u64)?,
    )?;
    let batch: Vec<(Vec<f64>, usize, Vec<f64>)> = (0..3)
        .map(|label| (rng.normal_vec(4), label, rng.normal_vec(3)))
        .collect();
    let weight = 1.0 / batch.len() as f64;
    let eval = |n: &Network, grads: Option<&mut Network>| -> Result<f64> {
        let mut total = 0.0;
        let mut grads = grads;
        for (x, label, eps) in &batch {
            let s = sample_loss(n, x, *label, &config, Noise::Fixed(eps), weight, grads.as_deref_mut())?;
            total += s.loss * weight;
        }
        Ok(total)
    };
    let mut grads = net.zeros_like();
    eval(&net, Some(&mut grads))?;
    let numeric = finite_diff_grad(
        |theta| {
            let mut n = net.clone();
            n.set_flat(theta).expect("same layout");
            eval(&n, None).unwrap_or(f64::NAN)
        },
        &net.to_flat(),
        STEP,
    )?;
    Ok(relative_error(&flip(grads.to_flat(), fault), &numeric))
}

/// Runs every selected case and returns one result per case, in a fixed order.
pub fn run_gradcheck(options: &GradcheckOptions) -> Result<Vec<CaseResult>> {
    let root = RngStream::new(options.seed);
    let only = options.only.as_deref();
    let mut results = Vec::new();
    for (kind, prefix, instances, tolerance) in [
        (CaseKind::Loss, "", options.loss_instances, LOSS_TOLERANCE),
        (CaseKind::EndToEnd, "e2e/", options.end_to_end_instances, END_TO_END_TOLERANCE),
    ] {
        for (name, parts) in variants() {
            let full = format!("{prefix}{name}");
            if !selected(&full, only) {
                continue;
            }
            let mut rng = root.fork_named(&full);
            let mut max_error: f64 = 0.0;
            for _ in 0..instances {
                let err = match kind {
                    CaseKind::Loss => loss_case(&parts, &mut rng, options.inject_sign_fault)?,
                    CaseKind::EndToEnd => end_to_end_case(&parts, &mut rng, options.inject_sign_fault)?,
                };
                max_error = max_error.max(err);
            }
            results.push(CaseResult {
                name: full,
                kind,
                instances,
                max_error,
                tolerance,
                passed: max_error <= tolerance,
            });
        }
    }
    Ok(results)
}
