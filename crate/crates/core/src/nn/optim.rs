use crate::{Error, Result};

#[derive(Debug, Clone)]
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
    updates: i32,
}

/// Adam optimiser state.
///
/// Tensors whose gradient is `None` in a step are skipped entirely: their
/// parameters and moments are left untouched and their bias-correction
/// counter does not advance.
#[derive(Debug, Clone)]
pub struct Adam {
    learning_rate: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    step: u64,
    slots: Vec<Moments>,
}

impl Adam {
    pub fn new(learning_rate: f64) -> Result<Self> {
        if !(learning_rate >= 0.0 && learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be finite and non-negative, got {learning_rate}"
            )));
        }
        Ok(Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            slots: Vec::new(),
        })
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    /// Number of completed updates.
    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update. `params[i]` and `grads[i]` must have equal length,
    /// and the tensor list must keep the same layout across calls.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[Option<&[f64]>]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::DimensionMismatch {
                context: "optimizer tensor count",
                expected: params.len(),
                actual: grads.len(),
            });
        }
        if self.slots.is_empty() {
            self.slots = params
                .iter()
                .map(|p| Moments {
                    m: vec![0.0; p.len()],
                    v: vec![0.0; p.len()],
                    updates: 0,
                })
                .collect();
        } else if self.slots.len() != params.len() {
            return Err(Error::DimensionMismatch {
                context: "optimizer tensor layout",
                expected: self.slots.len(),
                actual: params.len(),
            });
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            let expected = self.slots[i].m.len();
            if p.len() != expected {
                return Err(Error::DimensionMismatch {
                    context: "optimizer parameter tensor",
                    expected,
                    actual: p.len(),
                });
            }
            if let Some(g) = g {
                if g.len() != p.len() {
                    return Err(Error::DimensionMismatch {
                        context: "optimizer gradient tensor",
                        expected: p.len(),
                        actual: g.len(),
                    });
                }
            }
        }
        let (b1, b2, eps, lr) = (self.beta1, self.beta2, self.epsilon, self.learning_rate);
        for ((p, g), slot) in params.iter_mut().zip(grads).zip(&mut self.slots) {
            let Some(g) = g else { continue };
            slot.updates += 1;
            let c1 = 1.0 - b1.powi(slot.updates);
            let c2 = 1.0 - b2.powi(slot.updates);
            for ((w, &gi), (m, v)) in p
                .iter_mut()
                .zip(g.iter())
                .zip(slot.m.iter_mut().zip(slot.v.iter_mut()))
            {
                *m = b1 * *m + (1.0 - b1) * gi;
                *v = b2 * *v + (1.0 - b2) * gi * gi;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        self.step += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut adam = Adam::new(0.1).unwrap();
        let mut w = vec![1.0, -2.0];
        adam.step(&mut [&mut w], &[Some(&[0.0, 0.0])]).unwrap();
        assert_eq!(w, vec![1.0, -2.0]);
        assert_eq!(adam.steps(), 1);
    }

    #[test]
    fn one_step_on_square_descends() {
        let mut adam = Adam::new(0.01).unwrap();
        let mut w = vec![1.0];
        let g = [2.0 * w[0]];
        adam.step(&mut [&mut w], &[Some(&g)]).unwrap();
        assert!(w[0] * w[0] < 1.0);
    }

    #[test]
    fn converges_on_convex_quadratic() {
        // f(x, y) = (x - 1)^2 + 3 (y + 2)^2 + (x - 1)(y + 2); minimiser (1, -2).
        let mut adam = Adam::new(0.05).unwrap();
        let mut w = vec![-1.5, 1.0];
        let mut prev_step = 0;
        for _ in 0..500 {
            let (dx, dy) = (w[0] - 1.0, w[1] + 2.0);
            let g = [2.0 * dx + dy, 6.0 * dy + dx];
            adam.step(&mut [&mut w], &[Some(&g)]).unwrap();
            assert!(adam.steps() > prev_step);
            prev_step = adam.steps();
        }
        assert!((w[0] - 1.0).abs() < 1e-3 && (w[1] + 2.0).abs() < 1e-3, "{w:?}");
    }

    #[test]
    fn skipped_tensors_are_untouched() {
        let mut adam = Adam::new(0.1).unwrap();
        let mut a = vec![1.0];
        let mut b = vec![1.0];
        adam.step(&mut [&mut a, &mut b], &[Some(&[1.0]), Some(&[1.0])]).unwrap();
        let frozen = b.clone();
        adam.step(&mut [&mut a, &mut b], &[Some(&[1.0]), None]).unwrap();
        assert_eq!(b, frozen);
    }

    #[test]
    fn shape_mismatch_is_error() {
        let mut adam = Adam::new(0.1).unwrap();
        let mut w = vec![0.0; 3];
        assert!(adam.step(&mut [&mut w], &[Some(&[1.0])]).is_err());
        assert!(Adam::new(-1.0).is_err());
    }
}
