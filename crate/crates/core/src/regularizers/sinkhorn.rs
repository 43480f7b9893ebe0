//! Entropic optimal transport between uniform point clouds.

use crate::nn::Matrix;
use crate::{Error, Result};

/// Solution of one entropic transport problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Transport {
    /// Dual objective `⟨a, f⟩ + ⟨b, g⟩`.
    pub cost: f64,
    /// Row-major `n × m` transport plan.
    pub plan: Vec<f64>,
    pub converged: bool,
}

/// Result of [`sinkhorn_distance`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinkhornDistance {
    pub value: f64,
    /// All three underlying transport problems met the tolerance within the
    /// iteration budget.
    pub converged: bool,
}

const TOLERANCE: f64 = 1e-9;

fn check_clouds(a: &Matrix, b: &Matrix) -> Result<()> {
    if a.rows() == 0 || b.rows() == 0 {
        return Err(Error::Empty("sinkhorn point set"));
    }
    if a.cols() != b.cols() {
        return Err(Error::DimensionMismatch {
            context: "sinkhorn point dimension",
            expected: a.cols(),
            actual: b.cols(),
        });
    }
    if !a.is_finite() || !b.is_finite() {
        return Err(Error::NonFinite {
            value: f64::NAN,
            location: "sinkhorn point set".into(),
        });
    }
    Ok(())
}

fn squared_distances(a: &Matrix, b: &Matrix) -> Vec<f64> {
    let mut c = Vec::with_capacity(a.rows() * b.rows());
    for i in 0..a.rows() {
        let x = a.row(i);
        for j in 0..b.rows() {
            c.push(x.iter().zip(b.row(j)).map(|(p, q)| (p - q) * (p - q)).sum());
        }
    }
    c
}

/// `-eps · log Σ_j w · exp((pot_j − c_j) / eps)` with a max shift.
fn soft_min(pot: &[f64], costs: impl Iterator<Item = f64> + Clone, log_w: f64, eps: f64) -> f64 {
    let mut peak = f64::NEG_INFINITY;
    for (p, c) in pot.iter().zip(costs.clone()) {
        peak = peak.max((p - c) / eps);
    }
    let sum: f64 = pot.iter().zip(costs).map(|(p, c)| ((p - c) / eps - peak).exp()).sum();
    -eps * (log_w + peak + sum.ln())
}

/// Log-domain Sinkhorn on uniform weights with squared Euclidean cost.
///
/// The temperature is annealed geometrically from the largest cost down to
/// `epsilon`; each iteration averages the old and updated potentials of both
/// sides simultaneously, so swapping the clouds swaps `f` and `g` exactly.
pub fn entropic_transport(a: &Matrix, b: &Matrix, epsilon: f64, iters: usize) -> Result<Transport> {
    check_clouds(a, b)?;
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidConfig(format!("sinkhorn epsilon must be > 0, got {epsilon}")));
    }
    let (n, m) = (a.rows(), b.rows());
    let cost = squared_distances(a, b);
    let log_wa = -(n as f64).ln();
    let log_wb = -(m as f64).ln();
    let c_max = cost.iter().copied().fold(0.0, f64::max);
    let mut eps = c_max.max(epsilon);
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; m];
    let mut converged = false;
    for _ in 0..iters.max(1) {
        let f_new: Vec<f64> = (0..n)
            .map(|i| soft_min(&g, cost[i * m..(i + 1) * m].iter().copied(), log_wb, eps))
            .collect();
        let g_new: Vec<f64> = (0..m)
            .map(|j| soft_min(&f, (0..n).map(|i| cost[i * m + j]), log_wa, eps))
            .collect();
        let mut change = 0.0_f64;
        for (old, new) in f.iter_mut().zip(&f_new).chain(g.iter_mut().zip(&g_new)) {
            let next = 0.5 * (*old + new);
            change = change.max((next - *old).abs());
            *old = next;
        }
        if eps > epsilon {
            eps = (eps * 0.5).max(epsilon);
        } else if change <= TOLERANCE * (1.0 + c_max) {
            converged = true;
            break;
        }
    }
    let value = f.iter().sum::<f64>() / n as f64 + g.iter().sum::<f64>() / m as f64;
    let log_w = log_wa + log_wb;
    let plan = (0..n * m)
        .map(|ij| (log_w + (f[ij / m] + g[ij % m] - cost[ij]) / eps).exp())
        .collect();
    Ok(Transport {
        cost: value,
        plan,
        converged,
    })
}

/// Debiased entropic transport divergence
/// `OT(A,B) − ½·OT(A,A) − ½·OT(B,B)`, clamped at zero.
///
/// Debiasing removes the entropic blur, so `d(A, A) = 0` exactly and the
/// value tends to the squared 2-Wasserstein distance as `epsilon → 0`.
pub fn sinkhorn_distance(a: &Matrix, b: &Matrix, epsilon: f64, iters: usize) -> Result<SinkhornDistance> {
    Ok(sinkhorn_with_gradient(a, b, epsilon, iters)?.0)
}

/// [`sinkhorn_distance`] and its gradient with respect to the points of `a`
/// and `b`, holding the transport plans constant.
pub fn sinkhorn_with_gradient(
    a: &Matrix,
    b: &Matrix,
    epsilon: f64,
    iters: usize,
) -> Result<(SinkhornDistance, Matrix, Matrix)> {
    let ab = entropic_transport(a, b, epsilon, iters)?;
    let aa = entropic_transport(a, a, epsilon, iters)?;
    let bb = entropic_transport(b, b, epsilon, iters)?;
    let raw = ab.cost - 0.5 * aa.cost - 0.5 * bb.cost;
    let distance = SinkhornDistance {
        value: raw.max(0.0),
        converged: ab.converged && aa.converged && bb.converged,
    };
    let (n, m, d) = (a.rows(), b.rows(), a.cols());
    let mut grad_a = Matrix::zeros(n, d);
    let mut grad_b = Matrix::zeros(m, d);
    if raw > 0.0 {
        // d/dx_i Σ P_ij |x_i − y_j|² = 2 Σ_j P_ij (x_i − y_j); a symmetric self
        // plan contributes twice, cancelling the ½.
        for i in 0..n {
            for j in 0..m {
                let p = ab.plan[i * m + j];
                for c in 0..d {
                    let diff = 2.0 * p * (a.get(i, c) - b.get(j, c));
                    grad_a.data_mut()[i * d + c] += diff;
                    grad_b.data_mut()[j * d + c] -= diff;
                }
            }
        }
        for (x, g, plan, len) in [(a, &mut grad_a, &aa.plan, n), (b, &mut grad_b, &bb.plan, m)] {
            for i in 0..len {
                for j in 0..len {
                    let p = plan[i * len + j];
                    for c in 0..d {
                        g.data_mut()[i * d + c] -= 2.0 * p * (x.get(i, c) - x.get(j, c));
                    }
                }
            }
        }
    }
    Ok((distance, grad_a, grad_b))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud(points: &[[f64; 2]]) -> Matrix {
        Matrix::from_rows(points).unwrap()
    }

    #[test]
    fn plan_marginals_are_uniform() {
        let a = cloud(&[[0.0, 0.0], [1.0, 0.5], [0.2, 2.0]]);
        let b = cloud(&[[0.5, 0.5], [1.5, 1.0]]);
        let t = entropic_transport(&a, &b, 0.05, 500).unwrap();
        assert!(t.converged);
        for i in 0..3 {
            let row: f64 = t.plan[i * 2..i * 2 + 2].iter().sum();
            assert!((row - 1.0 / 3.0).abs() < 1e-6, "{row}");
        }
    }

    #[test]
    fn self_distance_is_exactly_zero() {
        let a = cloud(&[[0.0, 1.0], [3.0, -1.0], [2.0, 2.0]]);
        let d = sinkhorn_distance(&a, &a, 0.01, 200).unwrap();
        assert_eq!(d.value, 0.0);
    }

    #[test]
    fn single_points_give_squared_gap() {
        let a = cloud(&[[0.0, 0.0]]);
        let b = cloud(&[[3.0, 4.0]]);
        let d = sinkhorn_distance(&a, &b, 1e-3, 100).unwrap();
        assert!((d.value - 25.0).abs() < 0.25, "{}", d.value);
    }

    #[test]
    fn rejects_empty_and_mismatched_sets() {
        let a = cloud(&[[0.0, 0.0]]);
        assert!(matches!(
            sinkhorn_distance(&a, &Matrix::zeros(0, 2), 0.01, 10),
            Err(Error::Empty(_))
        ));
        assert!(sinkhorn_distance(&a, &Matrix::zeros(1, 3), 0.01, 10).is_err());
    }

    #[test]
    fn tiny_budget_reports_non_convergence() {
        let a = cloud(&[[0.0, 0.0], [5.0, 1.0]]);
        let b = cloud(&[[1.0, 2.0], [4.0, 4.0]]);
        let d = sinkhorn_distance(&a, &b, 0.01, 2).unwrap();
        assert!(!d.converged);
        assert!(d.value.is_finite() && d.value >= 0.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let a = cloud(&[[0.0, 0.3], [1.0, -0.2], [0.4, 0.9]]);
        let b = cloud(&[[2.0, 1.0], [2.5, 0.2]]);
        let (eps, iters) = (0.5, 2000);
        let (_, ga, _) = sinkhorn_with_gradient(&a, &b, eps, iters).unwrap();
        let h = 1e-5;
        for idx in 0..a.data().len() {
            let mut plus = a.clone();
            plus.data_mut()[idx] += h;
            let mut minus = a.clone();
            minus.data_mut()[idx] -= h;
            let fd = (sinkhorn_distance(&plus, &b, eps, iters).unwrap().value
                - sinkhorn_distance(&minus, &b, eps, iters).unwrap().value)
                / (2.0 * h);
            assert!((fd - ga.data()[idx]).abs() < 1e-4 * (1.0 + fd.abs()), "{fd} vs {}", ga.data()[idx]);
        }
    }
}
