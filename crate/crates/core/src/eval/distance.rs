use rayon::prelude::*;

use crate::error::{ensure_len, Error, Result};
use crate::matrix::Matrix;
use crate::numerics::dot;

/// Nonnegative query × gallery distances.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix(Matrix);

impl DistanceMatrix {
    pub fn new(values: Matrix) -> Result<Self> {
        if let Some(i) = values.as_slice().iter().position(|&v| v < 0.0) {
            return Err(Error::invalid(format!("negative distance at flat index {i}")));
        }
        Ok(Self(values))
    }

    pub fn num_queries(&self) -> usize {
        self.0.rows()
    }

    pub fn num_gallery(&self) -> usize {
        self.0.cols()
    }

    pub fn get(&self, q: usize, g: usize) -> f64 {
        self.0.get(q, g)
    }

    pub fn row(&self, q: usize) -> &[f64] {
        self.0.row(q)
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    /// Gallery indices of row `q` by ascending distance; ties keep gallery order.
    pub fn ranking(&self, q: usize) -> Vec<usize> {
        stable_argsort(self.row(q))
    }
}

pub(crate) fn stable_argsort(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    idx
}

fn squared_norms(m: &Matrix) -> Vec<f64> {
    m.iter_rows().map(|r| dot(r, r)).collect()
}

/// Squared Euclidean distances `‖a‖² + ‖b‖² − 2⟨a, b⟩`, tiny negatives clamped to 0.
pub(crate) fn squared_distances(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    ensure_len("feature dimension", a.cols(), b.cols())?;
    let na = squared_norms(a);
    let nb = squared_norms(b);
    let rows: Vec<f64> = (0..a.rows())
        .into_par_iter()
        .flat_map_iter(|i| {
            let ra = a.row(i);
            let nai = na[i];
            nb.iter()
                .enumerate()
                .map(move |(j, nbj)| (nai + nbj - 2.0 * dot(ra, b.row(j))).max(0.0))
                .collect::<Vec<_>>()
        })
        .collect();
    Matrix::new(a.rows(), b.rows(), rows)
}

pub fn l2_distance_matrix(queries: &Matrix, gallery: &Matrix) -> Result<DistanceMatrix> {
    let mut d = squared_distances(queries, gallery)?.into_vec();
    for v in &mut d {
        *v = v.sqrt();
    }
    DistanceMatrix::new(Matrix::new(queries.rows(), gallery.rows(), d)?)
}
