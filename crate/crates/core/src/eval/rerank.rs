//! k-reciprocal re-ranking with Jaccard distance over Gaussian-weighted
//! neighbour encodings.
//!
//! Every query and gallery item is a node of one graph. For node `i` the
//! k-reciprocal set keeps each of its `k1 + 1` nearest nodes that also lists
//! `i` among its own `k1 + 1` nearest. The set is then expanded by the
//! half-size reciprocal sets of its members whenever such a candidate set
//! overlaps the original set by more than two thirds. Members are weighted by
//! `exp(−d)` and normalized, rows are averaged over the `k2` nearest nodes,
//! and the Jaccard distance between encodings is mixed with the original
//! distance: `d* = (1 − λ)·d_J + λ·d`.
//!
//! `d` is the squared Euclidean distance scaled so that each row of the joint
//! query+gallery matrix has maximum 1.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::distance::{squared_distances, stable_argsort, DistanceMatrix};
use crate::error::{ensure_len, Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RerankParams {
    pub k1: usize,
    pub k2: usize,
    pub lambda: f64,
}

impl Default for RerankParams {
    fn default() -> Self {
        Self {
            k1: 20,
            k2: 6,
            lambda: 0.3,
        }
    }
}

impl RerankParams {
    pub fn validate(&self, num_gallery: usize) -> Result<()> {
        if self.k2 == 0 || self.k2 > self.k1 {
            return Err(Error::invalid(format!("need k1 >= k2 >= 1, got k1={} k2={}", self.k1, self.k2)));
        }
        if self.k1 >= num_gallery {
            return Err(Error::invalid(format!(
                "k1={} must be smaller than the gallery size {num_gallery}",
                self.k1
            )));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::invalid(format!("lambda must lie in [0, 1], got {}", self.lambda)));
        }
        Ok(())
    }

    /// Shrinks `k1` (and `k2` with it) so the parameters fit a small gallery.
    pub fn clamped(self, num_gallery: usize) -> Self {
        let k1 = self.k1.min(num_gallery.saturating_sub(1)).max(1);
        Self {
            k1,
            k2: self.k2.min(k1).max(1),
            lambda: self.lambda,
        }
    }
}

type SparseRow = Vec<(usize, f64)>;

fn reciprocal(rank: &[Vec<usize>], i: usize, k: usize) -> Vec<usize> {
    rank[i][..=k]
        .iter()
        .copied()
        .filter(|&c| rank[c][..=k].contains(&i))
        .collect()
}

fn round_half_even(x: f64) -> usize {
    x.round_ties_even() as usize
}

fn encode(rank: &[Vec<usize>], dist: &Matrix, i: usize, k1: usize) -> SparseRow {
    let base = reciprocal(rank, i, k1);
    let half = round_half_even(k1 as f64 / 2.0);
    let mut expanded = base.clone();
    for &c in &base {
        let cand = reciprocal(rank, c, half);
        let overlap = cand.iter().filter(|x| base.contains(x)).count();
        if overlap as f64 > 2.0 / 3.0 * cand.len() as f64 {
            expanded.extend_from_slice(&cand);
        }
    }
    expanded.sort_unstable();
    expanded.dedup();
    let weights: Vec<f64> = expanded.iter().map(|&j| (-dist.get(i, j)).exp()).collect();
    let total: f64 = weights.iter().sum();
    expanded.into_iter().zip(weights).map(|(j, w)| (j, w / total)).collect()
}

fn expand_queries(rows: &[SparseRow], rank: &[Vec<usize>], k2: usize) -> Vec<SparseRow> {
    let n = rows.len();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut dense = vec![0.0; n];
            for &r in &rank[i][..k2] {
                for &(j, w) in &rows[r] {
                    dense[j] += w;
                }
            }
            dense
                .into_iter()
                .enumerate()
                .filter(|&(_, w)| w != 0.0)
                .map(|(j, w)| (j, w / k2 as f64))
                .collect()
        })
        .collect()
}

pub fn k_reciprocal_rerank(queries: &Matrix, gallery: &Matrix, params: RerankParams) -> Result<DistanceMatrix> {
    ensure_len("feature dimension", queries.cols(), gallery.cols())?;
    params.validate(gallery.rows())?;
    let nq = queries.rows();
    let ng = gallery.rows();
    let n = nq + ng;
    let mut all = Vec::with_capacity(n * queries.cols());
    all.extend_from_slice(queries.as_slice());
    all.extend_from_slice(gallery.as_slice());
    let all = Matrix::new(n, queries.cols(), all)?;

    let mut dist = squared_distances(&all, &all)?;
    for i in 0..n {
        for j in 0..i {
            // symmetric by construction
            let v = dist.get(i, j);
            dist.set(j, i, v);
        }
        dist.set(i, i, 0.0);
    }
    for i in 0..n {
        let row = dist.row_mut(i);
        let max = row.iter().copied().fold(0.0, f64::max);
        if max > 0.0 {
            row.iter_mut().for_each(|v| *v /= max);
        }
    }

    let rank: Vec<Vec<usize>> = (0..n).into_par_iter().map(|i| stable_argsort(dist.row(i))).collect();
    let mut rows: Vec<SparseRow> = (0..n).into_par_iter().map(|i| encode(&rank, &dist, i, params.k1)).collect();
    if params.k2 != 1 {
        rows = expand_queries(&rows, &rank, params.k2);
    }

    // inverted index: node -> rows with a nonzero weight on it
    let mut inverted: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (r, row) in rows.iter().enumerate() {
        for &(j, w) in row {
            inverted[j].push((r, w));
        }
    }

    let lambda = params.lambda;
    let out: Vec<f64> = (0..nq)
        .into_par_iter()
        .flat_map_iter(|i| {
            let mut shared = vec![0.0; n];
            for &(j, w) in &rows[i] {
                for &(r, wr) in &inverted[j] {
                    shared[r] += w.min(wr);
                }
            }
            let d_row = dist.row(i);
            (nq..n)
                .map(|g| {
                    let jaccard = 1.0 - shared[g] / (2.0 - shared[g]);
                    ((1.0 - lambda) * jaccard + lambda * d_row[g]).max(0.0)
                })
                .collect::<Vec<_>>()
        })
        .collect();
    DistanceMatrix::new(Matrix::new(nq, ng, out)?)
}
