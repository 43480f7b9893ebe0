//! Dose-response network architectures, training and persistence.

mod config;
mod drnet;
mod mlp;
mod persist;
mod range;
mod train;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

pub use config::DrNetConfig;
pub use drnet::DrNet;
pub use mlp::MlpNet;
pub use persist::{MODEL_FORMAT, MODEL_VERSION};
pub use range::DosageRange;
pub use train::{fit, TrainConfig, TrainReport, STREAM_DROPOUT, STREAM_INIT, STREAM_SHUFFLE};

use crate::data::{Dataset, OutcomeScale, Split, Standardizer};
use crate::nn::{Adam, Matrix, Stack};
use crate::{Error, Result};

/// Zeroes the output layer so an untrained network predicts the training
/// mean outcome. Heads of strata without data then stay at the mean instead
/// of a random offset.
pub(crate) fn zero_output_layer(stack: &mut Stack) {
    let last = stack.layers_mut().last_mut().expect("stack has layers");
    last.weights_mut().fill(0.0);
    last.bias_mut().fill(0.0);
}

/// Factual training examples in original units.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub x: Matrix,
    pub treatment: Vec<usize>,
    pub dosage: Vec<f64>,
    pub outcome: Vec<f64>,
}

impl Batch {
    pub fn from_dataset(data: &Dataset, indices: &[usize]) -> Self {
        Self {
            x: data.covariates.gather_rows(indices),
            treatment: indices.iter().map(|&i| data.treatment[i]).collect(),
            dosage: indices.iter().map(|&i| data.dosage[i]).collect(),
            outcome: indices.iter().map(|&i| data.outcome[i]).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.treatment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.treatment.is_empty()
    }
}

pub(crate) fn check_batch(batch: &Batch, num_features: usize, ranges: &[DosageRange]) -> Result<()> {
    let n = batch.len();
    if n == 0 {
        return Err(Error::Empty("training batch"));
    }
    for (context, len) in [
        ("batch covariate rows", batch.x.rows()),
        ("batch dosages", batch.dosage.len()),
        ("batch outcomes", batch.outcome.len()),
    ] {
        if len != n {
            return Err(Error::DimensionMismatch {
                context,
                expected: n,
                actual: len,
            });
        }
    }
    if batch.x.cols() != num_features {
        return Err(Error::DimensionMismatch {
            context: "batch covariate columns",
            expected: num_features,
            actual: batch.x.cols(),
        });
    }
    for (&t, &s) in batch.treatment.iter().zip(&batch.dosage) {
        let range = ranges.get(t).ok_or(Error::TreatmentOutOfRange {
            treatment: t,
            num_treatments: ranges.len(),
        })?;
        range.check(s)?;
    }
    Ok(())
}

/// Penalty on the base-layer representations of a batch.
pub trait RepresentationPenalty: Sync {
    /// Weighted penalty value and its gradient with respect to every entry
    /// of `representations`.
    fn penalty(&self, representations: &Matrix, treatment: &[usize]) -> Result<(f64, Matrix)>;
}

/// Optional per-step regularisation.
#[derive(Default, Clone, Copy)]
pub struct StepHooks<'a> {
    /// Per-sample dropout rate for base and treatment layers.
    pub dropout_rates: Option<&'a [f64]>,
    pub penalty: Option<&'a dyn RepresentationPenalty>,
}

impl StepHooks<'_> {
    pub fn is_active(&self) -> bool {
        self.dropout_rates.is_some() || self.penalty.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    /// Factual mean squared error on the standardised outcome scale, before
    /// the update.
    pub loss: f64,
    pub penalty: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Mlp,
    Tarnet,
    DrNet,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::DrNet, ModelKind::Tarnet, ModelKind::Mlp];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Mlp => "mlp",
            ModelKind::Tarnet => "tarnet",
            ModelKind::DrNet => "drnet",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mlp" => Ok(ModelKind::Mlp),
            "tarnet" => Ok(ModelKind::Tarnet),
            "drnet" => Ok(ModelKind::DrNet),
            other => Err(Error::Usage(format!(
                "unknown model kind `{other}` (expected mlp, tarnet or drnet)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    Mlp,
    Tarnet,
}

/// A trained or trainable neural estimator.
#[derive(Debug, Clone, PartialEq)]
pub enum NeuralModel {
    DrNet(DrNet),
    /// A [`DrNet`] with one stratum and the dosage appended once.
    Tarnet(DrNet),
    Mlp(MlpNet),
}

/// Builds an MLP or TARNET from a hierarchical layout. TARNET forces
/// `num_strata = 1` and `repeat_dosage = false`.
pub fn build_baseline<R: Rng + ?Sized>(
    kind: BaselineKind,
    config: DrNetConfig,
    normalizer: Standardizer,
    outcome_scale: OutcomeScale,
    rng: &mut R,
) -> Result<NeuralModel> {
    match kind {
        BaselineKind::Mlp => Ok(NeuralModel::Mlp(MlpNet::new(config, normalizer, outcome_scale, rng)?)),
        BaselineKind::Tarnet => Ok(NeuralModel::Tarnet(DrNet::new(
            config.as_tarnet(),
            normalizer,
            outcome_scale,
            rng,
        )?)),
    }
}

impl NeuralModel {
    pub fn new<R: Rng + ?Sized>(
        kind: ModelKind,
        config: DrNetConfig,
        normalizer: Standardizer,
        outcome_scale: OutcomeScale,
        rng: &mut R,
    ) -> Result<Self> {
        match kind {
            ModelKind::DrNet => Ok(NeuralModel::DrNet(DrNet::new(config, normalizer, outcome_scale, rng)?)),
            ModelKind::Tarnet => build_baseline(BaselineKind::Tarnet, config, normalizer, outcome_scale, rng),
            ModelKind::Mlp => build_baseline(BaselineKind::Mlp, config, normalizer, outcome_scale, rng),
        }
    }

    /// Model with covariate and outcome scaling fitted on the training split.
    pub fn for_dataset<R: Rng + ?Sized>(
        kind: ModelKind,
        config: DrNetConfig,
        data: &Dataset,
        rng: &mut R,
    ) -> Result<Self> {
        let train = data.indices(Split::Train);
        let normalizer = Standardizer::fit(&data.covariates, train)?;
        let scale = OutcomeScale::fit(train.iter().map(|&i| data.outcome[i]));
        Self::new(kind, config, normalizer, scale, rng)
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            NeuralModel::DrNet(_) => ModelKind::DrNet,
            NeuralModel::Tarnet(_) => ModelKind::Tarnet,
            NeuralModel::Mlp(_) => ModelKind::Mlp,
        }
    }

    pub fn config(&self) -> &DrNetConfig {
        match self {
            NeuralModel::DrNet(m) | NeuralModel::Tarnet(m) => m.config(),
            NeuralModel::Mlp(m) => m.config(),
        }
    }

    pub fn normalizer(&self) -> &Standardizer {
        match self {
            NeuralModel::DrNet(m) | NeuralModel::Tarnet(m) => m.normalizer(),
            NeuralModel::Mlp(m) => m.normalizer(),
        }
    }

    pub fn outcome_scale(&self) -> OutcomeScale {
        match self {
            NeuralModel::DrNet(m) | NeuralModel::Tarnet(m) => m.outcome_scale(),
            NeuralModel::Mlp(m) => m.outcome_scale(),
        }
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        match self {
            NeuralModel::DrNet(m) | NeuralModel::Tarnet(m) => m.tensors(),
            NeuralModel::Mlp(m) => m.tensors(),
        }
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            NeuralModel::DrNet(m) | NeuralModel::Tarnet(m) => m.tensors_mut(),
            NeuralModel::Mlp(m) => m.tensors_mut(),
        }
    }

    pub fn hierarchical(&self) -> Option<&DrNet> {
        match self {
            NeuralModel::DrNet(m) | NeuralModel::Tarnet(m) => Some(m),
            NeuralModel::Mlp(_) => None,
        }
    }

    pub fn predict(&self, x: &[f64], t: usize, s: f64) -> Result<f64> {
        match self {
            NeuralModel::DrNet(m) | NeuralModel::Tarnet(m) => m.predict(x, t, s),
            NeuralModel::Mlp(m) => m.predict(x, t, s),
        }
    }

    /// Closure over `s` for a fixed unit and treatment; the covariate part of
    /// the network is evaluated once.
    pub fn curve<'a>(&'a self, x: &[f64], t: usize) -> Result<Box<dyn Fn(f64) -> f64 + Send + 'a>> {
        let k = self.config().num_treatments;
        if t >= k {
            return Err(Error::TreatmentOutOfRange {
                treatment: t,
                num_treatments: k,
            });
        }
        match self {
            NeuralModel::DrNet(m) | NeuralModel::Tarnet(m) => {
                let rep = m.representation(x, t)?;
                Ok(Box::new(move |s| {
                    let s = m.dosage_range(t).clamp(s);
                    m.predict_from_representation(&rep, t, s).expect("clamped dosage")
                }))
            }
            NeuralModel::Mlp(m) => {
                m.predict(x, t, m.dosage_range(t).min)?;
                let encoded = m.encode(x, t);
                Ok(Box::new(move |s| m.predict_unchecked(&encoded, m.dosage_range(t).clamp(s))))
            }
        }
    }

    pub fn train_step(
        &mut self,
        batch: &Batch,
        hooks: &StepHooks<'_>,
        optimizer: &mut Adam,
        rng: &mut dyn RngCore,
    ) -> Result<StepOutcome> {
        match self {
            NeuralModel::DrNet(m) | NeuralModel::Tarnet(m) => m.train_step(batch, hooks, optimizer, rng),
            NeuralModel::Mlp(m) => m.train_step(batch, hooks, optimizer, rng),
        }
    }

    /// Mean squared factual error over `indices`, in original outcome units.
    pub fn factual_mse(&self, data: &Dataset, indices: &[usize]) -> Result<f64> {
        if indices.is_empty() {
            return Err(Error::Empty("evaluation indices"));
        }
        let mut total = 0.0;
        for &i in indices {
            let r = self.predict(data.covariates.row(i), data.treatment[i], data.dosage[i])? - data.outcome[i];
            total += r * r;
        }
        Ok(total / indices.len() as f64)
    }
}
