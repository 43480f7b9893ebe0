use crate::data::{stream_rng, Standardizer};
use crate::nn::{Activation, Adam, Matrix, SideInput, Stack};
use crate::{Error, Result};

const LEARNING_RATE: f64 = 0.01;
const MAX_EPOCHS: usize = 300;
const PATIENCE: usize = 30;

/// Multinomial logistic regression estimating `p(t | x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PropensityModel {
    normalizer: Standardizer,
    linear: Stack,
}

fn softmax_in_place(v: &mut [f64]) {
    let peak = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - peak).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

impl PropensityModel {
    /// Full-batch cross-entropy training on `train`, keeping the parameters
    /// with the best accuracy on `validation` (or the last ones when it is
    /// empty).
    pub fn fit(
        x: &Matrix,
        treatment: &[usize],
        num_treatments: usize,
        train: &[usize],
        validation: &[usize],
        seed: u64,
    ) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::Empty("propensity training set"));
        }
        if let Some(&t) = treatment.iter().find(|&&t| t >= num_treatments) {
            return Err(Error::TreatmentOutOfRange {
                treatment: t,
                num_treatments,
            });
        }
        let normalizer = Standardizer::fit(x, train)?;
        let mut rng = stream_rng(seed, 1);
        let linear = Stack::new(
            x.cols(),
            &[(num_treatments, Activation::Linear)],
            SideInput::None,
            &mut rng,
        )?;
        let mut model = Self { normalizer, linear };
        let inputs = model.normalizer.transform_rows(x, train);
        let mut optimizer = Adam::new(LEARNING_RATE)?;
        let accuracy = |m: &Self| -> f64 {
            let hits = validation
                .iter()
                .filter(|&&i| argmax(&m.probabilities(x.row(i))) == treatment[i])
                .count();
            hits as f64 / validation.len().max(1) as f64
        };
        let mut best = (accuracy(&model), model.linear.clone());
        let mut since_best = 0;
        let n = train.len() as f64;
        for _ in 0..MAX_EPOCHS {
            let mut logits = model.linear.forward(&inputs, None)?;
            for (r, &i) in train.iter().enumerate() {
                let row = logits.row_mut(r);
                softmax_in_place(row);
                row[treatment[i]] -= 1.0;
                for g in row.iter_mut() {
                    *g /= n;
                }
            }
            let grad = model.linear.backward(&logits)?;
            let grads: Vec<Option<&[f64]>> = grad.tensors().into_iter().map(Some).collect();
            optimizer.step(&mut model.linear.tensors_mut(), &grads)?;
            if validation.is_empty() {
                continue;
            }
            let acc = accuracy(&model);
            if acc > best.0 {
                best = (acc, model.linear.clone());
                since_best = 0;
            } else {
                since_best += 1;
                if since_best > PATIENCE {
                    break;
                }
            }
        }
        if !validation.is_empty() {
            model.linear = best.1;
        }
        Ok(model)
    }

    pub fn num_treatments(&self) -> usize {
        self.linear.output_dim()
    }

    /// Probability vector over treatments for one covariate row.
    pub fn probabilities(&self, x: &[f64]) -> Vec<f64> {
        let mut p = self.linear.predict_row(&self.normalizer.transform_row(x), &[]);
        softmax_in_place(&mut p);
        p
    }
}

/// Dropout rate `gamma · (1 − H(p) / log k)` for a propensity vector.
///
/// Confidently assigned units (low entropy) receive up to `gamma` dropout;
/// uniform propensities receive none. Entropies within `1e-12` of the maximum
/// count as uniform so the endpoint is exact.
pub fn propensity_dropout_rate(p: &[f64], gamma: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::InvalidProbability(format!("gamma {gamma} outside [0, 1]")));
    }
    if p.len() < 2 {
        return Err(Error::InvalidProbability(format!(
            "need >= 2 treatment probabilities, got {}",
            p.len()
        )));
    }
    if p.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
        return Err(Error::InvalidProbability(format!("negative or non-finite entry in {p:?}")));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidProbability(format!("probabilities sum to {total}")));
    }
    let entropy: f64 = p.iter().filter(|&&v| v > 0.0).map(|&v| -v * v.ln()).sum();
    let certainty = 1.0 - entropy / (p.len() as f64).ln();
    if certainty <= 1e-12 {
        return Ok(0.0);
    }
    Ok((gamma * certainty).clamp(0.0, gamma))
}
