use serde::{Deserialize, Serialize};

use crate::nn::Matrix;
use crate::{Error, Result};

/// Per-feature z-scoring fitted on a subset of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl Standardizer {
    /// Fits on `rows` of `x`. Zero-variance features get unit scale.
    pub fn fit(x: &Matrix, rows: &[usize]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Empty("standardizer rows"));
        }
        let p = x.cols();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; p];
        for &i in rows {
            for (m, v) in mean.iter_mut().zip(x.row(i)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; p];
        for &i in rows {
            for ((s, v), m) in var.iter_mut().zip(x.row(i)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let sd = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, sd })
    }

    pub fn identity(p: usize) -> Self {
        Self {
            mean: vec![0.0; p],
            sd: vec![1.0; p],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn transform_row_into(&self, row: &[f64], out: &mut [f64]) {
        for (((o, v), m), s) in out.iter_mut().zip(row).zip(&self.mean).zip(&self.sd) {
            *o = (v - m) / s;
        }
    }

    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; row.len()];
        self.transform_row_into(row, &mut out);
        out
    }

    /// Standardises the selected rows of `x` into a new matrix.
    pub fn transform_rows(&self, x: &Matrix, rows: &[usize]) -> Matrix {
        let mut out = Matrix::zeros(rows.len(), x.cols());
        for (r, &i) in rows.iter().enumerate() {
            self.transform_row_into(x.row(i), out.row_mut(r));
        }
        out
    }

    pub fn transform(&self, x: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(x.rows(), x.cols());
        for i in 0..x.rows() {
            self.transform_row_into(x.row(i), out.row_mut(i));
        }
        out
    }
}

/// Affine outcome scaling fitted on training outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeScale {
    pub mean: f64,
    pub sd: f64,
}

impl OutcomeScale {
    pub fn fit(values: impl IntoIterator<Item = f64>) -> Self {
        let v: Vec<f64> = values.into_iter().collect();
        if v.is_empty() {
            return Self::IDENTITY;
        }
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        Self {
            mean,
            sd: if sd > 1e-12 { sd } else { 1.0 },
        }
    }

    pub const IDENTITY: OutcomeScale = OutcomeScale { mean: 0.0, sd: 1.0 };

    #[inline]
    pub fn normalize(&self, y: f64) -> f64 {
        (y - self.mean) / self.sd
    }

    #[inline]
    pub fn denormalize(&self, z: f64) -> f64 {
        z * self.sd + self.mean
    }
}
