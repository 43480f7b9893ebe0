use crate::{Error, Result};

/// Number of trapezoid intervals used for every curve integral.
pub const INTEGRATION_INTERVALS: usize = 64;

/// `intervals + 1` equally spaced nodes on `[a, b]`; the last is exactly `b`.
pub fn integration_nodes(a: f64, b: f64, intervals: usize) -> Vec<f64> {
    (0..=intervals)
        .map(|i| {
            if i == intervals {
                b
            } else {
                a + (b - a) * i as f64 / intervals as f64
            }
        })
        .collect()
}

/// Romberg integral of `f` over `[a, b]` from `intervals + 1` equally spaced
/// evaluations. `intervals` must be a power of two.
pub fn romberg(f: impl Fn(f64) -> f64, a: f64, b: f64, intervals: usize) -> Result<f64> {
    if !(a < b) {
        return Err(Error::InvalidConfig(format!("integration bounds need a < b, got [{a}, {b}]")));
    }
    let values: Vec<f64> = integration_nodes(a, b, intervals).into_iter().map(f).collect();
    romberg_samples(&values, a, b)
}

/// Romberg integral from samples on `2^m + 1` equally spaced nodes.
///
/// Trapezoid estimates at strides `2^m, …, 2, 1` are extrapolated with the
/// Richardson tableau, which is exact for polynomials of degree `< 2(m+1)`.
pub fn romberg_samples(values: &[f64], a: f64, b: f64) -> Result<f64> {
    let intervals = values.len().saturating_sub(1);
    if intervals == 0 || !intervals.is_power_of_two() {
        return Err(Error::InvalidConfig(format!(
            "romberg needs 2^m + 1 samples, got {}",
            values.len()
        )));
    }
    if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            value: values[pos],
            location: format!("integrand sample {pos}"),
        });
    }
    let width = b - a;
    let mut row: Vec<f64> = Vec::new();
    let mut stride = intervals;
    let mut trapezoid = 0.5 * width * (values[0] + values[intervals]);
    loop {
        if stride < intervals {
            let h = width * stride as f64 / intervals as f64;
            let midpoints: f64 = (stride..intervals).step_by(2 * stride).map(|i| values[i]).sum();
            trapezoid = 0.5 * trapezoid + h * midpoints;
        }
        let mut next = Vec::with_capacity(row.len() + 1);
        next.push(trapezoid);
        let mut factor = 4.0;
        for prev in &row {
            let last = *next.last().expect("nonempty");
            next.push(last + (last - prev) / (factor - 1.0));
            factor *= 4.0;
        }
        row = next;
        if stride == 1 {
            break;
        }
        stride /= 2;
    }
    Ok(*row.last().expect("nonempty"))
}
