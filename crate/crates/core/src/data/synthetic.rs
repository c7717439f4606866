//! Gaussian identity clusters with deliberately confusable pairs.
//!
//! Each identity has a center in feature space; samples are the center plus
//! isotropic noise. A configurable number of identity pairs sit only
//! `pair_distance` apart while every other pair of centers is at least
//! `far_distance` apart, so separating the confusable pairs during training
//! requires fitting the within-identity noise.

use serde::{Deserialize, Serialize};

use super::{Dataset, Payload, Sample};
use crate::error::{Error, Result};
use crate::rng::RngStream;

const MAX_PLACEMENT_ATTEMPTS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub num_identities: usize,
    pub samples_per_identity: usize,
    pub dim: usize,
    pub confusable_pairs: usize,
    pub sigma_within: f64,
    pub pair_distance: f64,
    pub far_distance: f64,
    pub cameras: u32,
    /// Train on one half of the identities and evaluate on the other.
    pub disjoint_train_test: bool,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            num_identities: 64,
            samples_per_identity: 12,
            dim: 32,
            confusable_pairs: 8,
            sigma_within: 0.35,
            pair_distance: 1.0,
            far_distance: 4.0,
            cameras: 4,
            disjoint_train_test: false,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.num_identities < 2 {
            return fail("synthetic data needs at least 2 identities".into());
        }
        if self.disjoint_train_test && self.num_identities < 4 {
            return fail("disjoint train/test needs at least 4 identities".into());
        }
        if self.samples_per_identity < 3 {
            return fail("need at least 3 samples per identity (query, gallery, train)".into());
        }
        if self.dim == 0 {
            return fail("feature dimension must be positive".into());
        }
        if 2 * self.confusable_pairs > self.num_identities {
            return fail(format!(
                "{} confusable pairs need {} identities, only {} available",
                self.confusable_pairs,
                2 * self.confusable_pairs,
                self.num_identities
            ));
        }
        if !(self.sigma_within >= 0.0 && self.sigma_within.is_finite()) {
            return fail("sigma_within must be finite and >= 0".into());
        }
        if !(self.pair_distance >= 0.0 && self.pair_distance < self.far_distance && self.far_distance.is_finite()) {
            return fail("need 0 <= pair_distance < far_distance".into());
        }
        if self.cameras == 0 {
            return fail("need at least one camera".into());
        }
        Ok(())
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Identity centers; identities `2k` and `2k + 1` form confusable pair `k`.
fn place_centers(spec: &SyntheticSpec, rng: &mut RngStream) -> Result<Vec<Vec<f64>>> {
    // typical inter-center distance ≈ 1.5 × far_distance
    let scale = 1.5 * spec.far_distance / (2.0 * spec.dim as f64).sqrt();
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(spec.num_identities);

    let far_from_all = |c: &[f64], centers: &[Vec<f64>], skip: Option<usize>| {
        centers
            .iter()
            .enumerate()
            .all(|(i, o)| Some(i) == skip || dist(c, o) >= spec.far_distance)
    };

    while centers.len() < spec.num_identities {
        let id = centers.len();
        let partner_of = (id % 2 == 1 && id < 2 * spec.confusable_pairs).then(|| id - 1);
        let mut placed = false;
        for _ in 0..MAX_PLACEMENT_ATTEMPTS {
            let candidate: Vec<f64> = match partner_of {
                Some(anchor) => {
                    let dir = rng.normal_vec(spec.dim);
                    let n = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if n == 0.0 {
                        continue;
                    }
                    centers[anchor]
                        .iter()
                        .zip(&dir)
                        .map(|(a, d)| a + spec.pair_distance * d / n)
                        .collect()
                }
                None => rng.normal_vec(spec.dim).into_iter().map(|v| v * scale).collect(),
            };
            if far_from_all(&candidate, &centers, partner_of) {
                centers.push(candidate);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::Config(format!(
                "could not place identity {id} at distance >= {} from the others; \
                 lower far_distance or the number of identities",
                spec.far_distance
            )));
        }
    }
    Ok(centers)
}

/// Whether an identity is held out for evaluation.
///
/// Identities are grouped (confusable pairs stay together) and groups
/// alternate between train and test, so both sides receive confusable pairs.
fn is_test_identity(spec: &SyntheticSpec, id: usize) -> bool {
    if !spec.disjoint_train_test {
        return true;
    }
    let paired = 2 * spec.confusable_pairs;
    let group = if id < paired {
        id / 2
    } else {
        spec.confusable_pairs + (id - paired)
    };
    group % 2 == 1
}

/// Generates the dataset.
///
/// Identities held out for evaluation contribute one query (their first
/// sample) and `samples_per_identity / 2` gallery samples; the remaining
/// samples go to training unless train and test identities are disjoint, in
/// which case they are dropped. Training identities put every sample in the
/// train split. Cameras are assigned round-robin per identity.
pub fn generate_confusable(spec: &SyntheticSpec, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    let root = RngStream::new(seed);
    let centers = place_centers(spec, &mut root.fork_named("centers"))?;
    let mut noise = root.fork_named("samples");

    let gallery_count = spec.samples_per_identity / 2;
    let mut ds = Dataset::default();
    for (id, center) in centers.iter().enumerate() {
        let test = is_test_identity(spec, id);
        for k in 0..spec.samples_per_identity {
            let x: Vec<f64> = center
                .iter()
                .map(|c| c + spec.sigma_within * noise.normal())
                .collect();
            let sample = Sample {
                payload: Payload::Features(x),
                identity: id as u32,
                camera: (k as u32) % spec.cameras,
            };
            match (test, k) {
                (false, _) => ds.train.push(sample),
                (true, 0) => ds.query.push(sample),
                (true, k) if k <= gallery_count => ds.gallery.push(sample),
                (true, _) if !spec.disjoint_train_test => ds.train.push(sample),
                _ => {}
            }
        }
    }
    Ok(ds)
}
