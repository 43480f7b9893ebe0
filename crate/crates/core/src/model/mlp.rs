use rand::{Rng, RngCore};

use super::config::DrNetConfig;
use super::range::DosageRange;
use super::{check_batch, Batch, StepHooks, StepOutcome};
use crate::data::{OutcomeScale, Standardizer};
use crate::nn::{mse_loss, Activation, Adam, Matrix, SideInput, Stack};
use crate::{Error, Result};

/// Single feed-forward network over `[x, one_hot(t), s]`.
///
/// Hidden layers follow the hierarchical layout end to end (base, then
/// treatment, then head depths and widths) so both architectures share
/// hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpNet {
    config: DrNetConfig,
    normalizer: Standardizer,
    outcome_scale: OutcomeScale,
    stack: Stack,
}

impl MlpNet {
    pub fn new<R: Rng + ?Sized>(
        config: DrNetConfig,
        normalizer: Standardizer,
        outcome_scale: OutcomeScale,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        if normalizer.dim() != config.num_features {
            return Err(Error::DimensionMismatch {
                context: "normalizer features",
                expected: config.num_features,
                actual: normalizer.dim(),
            });
        }
        let mut layers = Vec::new();
        layers.extend(std::iter::repeat_n((config.base_width, Activation::Relu), config.base_depth));
        layers.extend(std::iter::repeat_n(
            (config.treatment_width, Activation::Relu),
            config.treatment_depth,
        ));
        layers.extend(std::iter::repeat_n((config.head_width, Activation::Relu), config.head_depth));
        layers.push((1, Activation::Linear));
        let input = config.num_features + config.num_treatments + 1;
        let mut stack = Stack::new(input, &layers, SideInput::None, rng)?;
        super::zero_output_layer(&mut stack);
        Ok(Self {
            config,
            normalizer,
            outcome_scale,
            stack,
        })
    }

    pub fn config(&self) -> &DrNetConfig {
        &self.config
    }

    pub fn normalizer(&self) -> &Standardizer {
        &self.normalizer
    }

    pub fn outcome_scale(&self) -> OutcomeScale {
        self.outcome_scale
    }

    pub fn stack(&self) -> &Stack {
        &self.stack
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        self.stack.tensors()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.stack.tensors_mut()
    }

    pub fn num_params(&self) -> usize {
        self.stack.num_params()
    }

    pub fn dosage_range(&self, t: usize) -> DosageRange {
        self.config.dosage_ranges[t]
    }

    fn encode_into(&self, x: &[f64], t: usize, s: f64, out: &mut [f64]) {
        let p = self.config.num_features;
        self.normalizer.transform_row_into(x, &mut out[..p]);
        for (j, v) in out[p..p + self.config.num_treatments].iter_mut().enumerate() {
            *v = if j == t { 1.0 } else { 0.0 };
        }
        out[p + self.config.num_treatments] = s;
    }

    pub fn predict(&self, x: &[f64], t: usize, s: f64) -> Result<f64> {
        if t >= self.config.num_treatments {
            return Err(Error::TreatmentOutOfRange {
                treatment: t,
                num_treatments: self.config.num_treatments,
            });
        }
        self.dosage_range(t).check(s)?;
        if x.len() != self.config.num_features {
            return Err(Error::DimensionMismatch {
                context: "covariate length",
                expected: self.config.num_features,
                actual: x.len(),
            });
        }
        Ok(self.predict_unchecked(&self.encode(x, t), s))
    }

    /// Encoded input with a dosage slot that [`MlpNet::predict_unchecked`]
    /// overwrites.
    pub(crate) fn encode(&self, x: &[f64], t: usize) -> Vec<f64> {
        let mut buf = vec![0.0; self.stack.input_dim()];
        self.encode_into(x, t, 0.0, &mut buf);
        buf
    }

    pub(crate) fn predict_unchecked(&self, encoded: &[f64], s: f64) -> f64 {
        let mut buf = encoded.to_vec();
        *buf.last_mut().expect("dosage slot") = s;
        self.outcome_scale.denormalize(self.stack.predict_row(&buf, &[])[0])
    }

    /// Optimisation step on the factual mean squared error. Regularisation
    /// hooks are not supported by this architecture.
    pub fn train_step(
        &mut self,
        batch: &Batch,
        hooks: &StepHooks<'_>,
        optimizer: &mut Adam,
        _rng: &mut dyn RngCore,
    ) -> Result<StepOutcome> {
        let (outcome, grads) = self.gradients(batch, hooks)?;
        let refs: Vec<Option<&[f64]>> = grads.iter().map(|g| g.as_deref()).collect();
        optimizer.step(&mut self.stack.tensors_mut(), &refs)?;
        Ok(outcome)
    }

    /// Loss of `batch` and the gradient of every tensor.
    pub fn gradients(&mut self, batch: &Batch, hooks: &StepHooks<'_>) -> Result<(StepOutcome, Vec<Option<Vec<f64>>>)> {
        if hooks.is_active() {
            return Err(Error::InvalidConfig(
                "regularisation hooks require the hierarchical architecture".into(),
            ));
        }
        check_batch(batch, self.config.num_features, &self.config.dosage_ranges)?;
        let n = batch.len();
        let width = self.stack.input_dim();
        let mut input = Matrix::zeros(n, width);
        for i in 0..n {
            self.encode_into(batch.x.row(i), batch.treatment[i], batch.dosage[i], input.row_mut(i));
        }
        let target: Vec<f64> = batch
            .outcome
            .iter()
            .map(|&y| self.outcome_scale.normalize(y))
            .collect();
        let pred = self.stack.forward(&input, None)?;
        let (loss, grad) = mse_loss(&pred, &target)?;
        if !loss.is_finite() {
            self.stack.clear_trace();
            return Err(Error::NonFinite {
                value: loss,
                location: "training loss".into(),
            });
        }
        let g = self.stack.backward(&grad)?;
        Ok((
            StepOutcome { loss, penalty: 0.0 },
            g.tensors().into_iter().map(|t| Some(t.to_vec())).collect(),
        ))
    }
}
