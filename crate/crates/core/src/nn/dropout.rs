use rand::{Rng, RngCore};

use super::matrix::Matrix;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropoutMode {
    Train,
    Inference,
}

/// Inverted dropout with one drop probability per row.
///
/// Kept units are scaled by `1 / (1 - p)` so the expected activation is
/// unchanged. Returns the output and, in training mode, the scaling mask
/// (`0` or `1/(1-p)` per entry) needed for the backward pass.
pub fn dropout_forward(
    input: &Matrix,
    rates: &[f64],
    mode: DropoutMode,
    rng: &mut dyn RngCore,
) -> Result<(Matrix, Option<Matrix>)> {
    if rates.len() != input.rows() {
        return Err(Error::DimensionMismatch {
            context: "dropout rates",
            expected: input.rows(),
            actual: rates.len(),
        });
    }
    if let Some(&bad) = rates.iter().find(|p| !(0.0..1.0).contains(*p)) {
        return Err(Error::InvalidProbability(format!(
            "drop probability {bad} not in [0, 1)"
        )));
    }
    if mode == DropoutMode::Inference {
        return Ok((input.clone(), None));
    }
    let mut out = input.clone();
    let mut mask = Matrix::zeros(input.rows(), input.cols());
    for (i, &p) in rates.iter().enumerate() {
        let keep_scale = 1.0 / (1.0 - p);
        let m = mask.row_mut(i);
        for (mj, oj) in m.iter_mut().zip(out.row_mut(i)) {
            // p == 0 draws nothing so zero-rate rows leave the stream untouched.
            let keep = p == 0.0 || rng.random::<f64>() >= p;
            *mj = if keep { keep_scale } else { 0.0 };
            *oj *= *mj;
        }
    }
    Ok((out, Some(mask)))
}
