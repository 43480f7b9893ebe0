use crate::model::DosageRange;
use crate::{Error, Result};

pub const GRID_POINTS: usize = 101;
const GOLDEN_TOLERANCE: f64 = 1e-10;

fn finite(v: f64, s: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite {
            value: v,
            location: format!("curve at dosage {s}"),
        })
    }
}

/// Maximiser of `curve` over `range` and its value.
///
/// A 101-point grid picks the best cell (first maximum wins), then
/// golden-section search refines within the neighbouring cells. The refined
/// point replaces the grid point only if strictly better, so a flat curve
/// returns the lowest dosage.
pub fn optimal_dosage(curve: impl Fn(f64) -> f64, range: DosageRange) -> Result<(f64, f64)> {
    let grid = range.nodes(GRID_POINTS - 1);
    let mut best = (grid[0], finite(curve(grid[0]), grid[0])?);
    let mut best_idx = 0;
    for (i, &s) in grid.iter().enumerate().skip(1) {
        let v = finite(curve(s), s)?;
        if v > best.1 {
            best = (s, v);
            best_idx = i;
        }
    }
    let mut lo = grid[best_idx.saturating_sub(1)];
    let mut hi = grid[(best_idx + 1).min(grid.len() - 1)];
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = finite(curve(x1), x1)?;
    let mut f2 = finite(curve(x2), x2)?;
    while hi - lo > GOLDEN_TOLERANCE {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = finite(curve(x1), x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = finite(curve(x2), x2)?;
        }
    }
    let (s, v) = if f1 >= f2 { (x1, f1) } else { (x2, f2) };
    if v > best.1 {
        best = (s, v);
    }
    Ok(best)
}
