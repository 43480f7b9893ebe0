use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Batch, NeuralModel, StepHooks};
use crate::data::{Dataset, Split};
use crate::nn::Adam;
use crate::regularizers::Regularizer;
use crate::{Error, Result};

/// Random streams derived from a training seed. Initialisation, shuffling and
/// dropout draw from separate streams so enabling one never shifts another.
pub const STREAM_INIT: u64 = 11;
pub const STREAM_SHUFFLE: u64 = 12;
pub const STREAM_DROPOUT: u64 = 13;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be finite and >= 0, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::InvalidConfig("batch size and epochs must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs_run: usize,
    pub best_epoch: usize,
    /// Factual validation MSE of the restored parameters.
    pub best_validation_mse: f64,
    pub steps: u64,
}

/// Mini-batch training with early stopping on validation factual MSE. The
/// parameters of the best epoch are restored before returning.
///
/// `model` should come from [`NeuralModel::for_dataset`] seeded with
/// `stream_rng(config.seed, STREAM_INIT)` so one seed fixes the whole run.
pub fn fit(
    model: &mut NeuralModel,
    data: &Dataset,
    config: &TrainConfig,
    regularizer: &Regularizer,
) -> Result<TrainReport> {
    config.validate()?;
    data.check_common_support(Split::Train)?;
    let validation = data.indices(Split::Validation);
    let mut order = regularizer.training_indices(data.indices(Split::Train));
    let mut shuffle_rng = crate::data::stream_rng(config.seed, STREAM_SHUFFLE);
    let mut dropout_rng = crate::data::stream_rng(config.seed, STREAM_DROPOUT);
    let mut optimizer = Adam::new(config.learning_rate)?;

    let score = |m: &NeuralModel| -> Result<f64> {
        if validation.is_empty() {
            Ok(f64::INFINITY)
        } else {
            m.factual_mse(data, validation)
        }
    };
    let mut best = score(model)?;
    let mut best_params: Vec<Vec<f64>> = model.tensors().into_iter().map(<[f64]>::to_vec).collect();
    let mut best_epoch = 0;
    let mut epochs_run = 0;
    let mut rates = Vec::new();
    for epoch in 1..=config.max_epochs {
        epochs_run = epoch;
        order.shuffle(&mut shuffle_rng);
        for chunk in order.chunks(config.batch_size) {
            let indices = regularizer.augment_batch(chunk);
            let batch = Batch::from_dataset(data, &indices);
            let mut hooks = StepHooks::default();
            if regularizer.dropout_rates_into(&indices, &mut rates) {
                hooks.dropout_rates = Some(&rates);
            }
            hooks.penalty = regularizer.penalty();
            model.train_step(&batch, &hooks, &mut optimizer, &mut dropout_rng)?;
        }
        let current = score(model)?;
        if current < best {
            best = current;
            best_epoch = epoch;
            for (dst, src) in best_params.iter_mut().zip(model.tensors()) {
                dst.copy_from_slice(src);
            }
        } else if epoch - best_epoch > config.patience {
            break;
        }
    }
    if validation.is_empty() {
        best_epoch = epochs_run;
    } else {
        for (dst, src) in model.tensors_mut().into_iter().zip(&best_params) {
            dst.copy_from_slice(src);
        }
    }
    Ok(TrainReport {
        epochs_run,
        best_epoch,
        best_validation_mse: best,
        steps: optimizer.steps(),
    })
}
