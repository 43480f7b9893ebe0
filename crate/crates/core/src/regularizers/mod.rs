//! Treatment-assignment-bias regularisers.
//!
//! The four schemes are reconstructions for the dosage setting:
//!
//! * Wasserstein: a debiased Sinkhorn divergence between each treatment
//!   group's base-layer representations and those of all other units,
//!   ignoring dosage.
//! * Propensity dropout (PD): per-unit dropout on base and treatment layers
//!   at rate `gamma · (1 − H(p)/log k)`.
//! * Perfect match (PM): every mini-batch is augmented with each unit's
//!   nearest neighbour in propensity space under every other treatment.
//! * PSM_PM: the same matching applied once to the training split.

mod matching;
mod propensity;
mod sinkhorn;

use serde::{Deserialize, Serialize};

pub use matching::MatchTable;
pub use propensity::{propensity_dropout_rate, PropensityModel};
pub use sinkhorn::{
    entropic_transport, sinkhorn_distance, sinkhorn_with_gradient, SinkhornDistance, Transport,
};

use crate::data::{Dataset, Split};
use crate::model::RepresentationPenalty;
use crate::nn::Matrix;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegularizerKind {
    None,
    Wasserstein,
    #[serde(rename = "pd")]
    PropensityDropout,
    #[serde(rename = "pm")]
    PerfectMatch,
    #[serde(rename = "psm_pm")]
    PsmPm,
}

impl RegularizerKind {
    pub fn name(self) -> &'static str {
        match self {
            RegularizerKind::None => "none",
            RegularizerKind::Wasserstein => "wasserstein",
            RegularizerKind::PropensityDropout => "pd",
            RegularizerKind::PerfectMatch => "pm",
            RegularizerKind::PsmPm => "psm_pm",
        }
    }
}

impl std::str::FromStr for RegularizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(RegularizerKind::None),
            "wasserstein" | "wass" => Ok(RegularizerKind::Wasserstein),
            "pd" => Ok(RegularizerKind::PropensityDropout),
            "pm" => Ok(RegularizerKind::PerfectMatch),
            "psm_pm" | "psmpm" => Ok(RegularizerKind::PsmPm),
            other => Err(Error::Usage(format!("unknown regulariser `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegularizerConfig {
    pub kind: RegularizerKind,
    /// Weight λ of the Wasserstein penalty.
    pub penalty_weight: f64,
    /// Maximum propensity dropout rate.
    pub gamma: f64,
    pub sinkhorn_epsilon: f64,
    pub sinkhorn_iters: usize,
}

impl Default for RegularizerConfig {
    fn default() -> Self {
        Self {
            kind: RegularizerKind::None,
            penalty_weight: 0.1,
            gamma: 0.25,
            sinkhorn_epsilon: 0.01,
            sinkhorn_iters: 100,
        }
    }
}

impl RegularizerConfig {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn of_kind(kind: RegularizerKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.penalty_weight >= 0.0 && self.penalty_weight.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "penalty weight must be >= 0, got {}",
                self.penalty_weight
            )));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::InvalidConfig(format!("gamma must be in [0, 1), got {}", self.gamma)));
        }
        if !(self.sinkhorn_epsilon > 0.0) || self.sinkhorn_iters == 0 {
            return Err(Error::InvalidConfig(
                "sinkhorn epsilon must be > 0 and iterations >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Value of [`wasserstein_penalty`].
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyValue {
    /// Unweighted mean divergence over the scored groups.
    pub value: f64,
    /// Gradient of `value` with respect to every representation row.
    pub gradient: Matrix,
    /// No treatment group and its complement both had two or more units.
    pub degenerate: bool,
    pub converged: bool,
}

/// Mean Sinkhorn divergence between each treatment group's representations
/// and the pooled remaining units. Groups (or complements) with fewer than
/// two units are skipped.
pub fn wasserstein_penalty(
    representations: &Matrix,
    treatment: &[usize],
    epsilon: f64,
    iters: usize,
) -> Result<PenaltyValue> {
    if representations.rows() != treatment.len() {
        return Err(Error::DimensionMismatch {
            context: "penalty treatments",
            expected: representations.rows(),
            actual: treatment.len(),
        });
    }
    let k = treatment.iter().copied().max().map_or(0, |t| t + 1);
    let mut gradient = Matrix::zeros(representations.rows(), representations.cols());
    let mut total = 0.0;
    let mut scored = 0;
    let mut converged = true;
    let mut terms = Vec::new();
    for t in 0..k {
        let (inside, outside): (Vec<usize>, Vec<usize>) =
            (0..treatment.len()).partition(|&i| treatment[i] == t);
        if inside.len() < 2 || outside.len() < 2 {
            continue;
        }
        let (d, ga, gb) = sinkhorn_with_gradient(
            &representations.gather_rows(&inside),
            &representations.gather_rows(&outside),
            epsilon,
            iters,
        )?;
        total += d.value;
        converged &= d.converged;
        scored += 1;
        terms.push((inside, ga, outside, gb));
    }
    if scored == 0 {
        return Ok(PenaltyValue {
            value: 0.0,
            gradient,
            degenerate: true,
            converged,
        });
    }
    let inv = 1.0 / scored as f64;
    for (inside, mut ga, outside, mut gb) in terms {
        ga.scale(inv);
        gb.scale(inv);
        gradient.scatter_add_rows(&inside, &ga);
        gradient.scatter_add_rows(&outside, &gb);
    }
    Ok(PenaltyValue {
        value: total * inv,
        gradient,
        degenerate: false,
        converged,
    })
}

/// λ-weighted [`wasserstein_penalty`] as a training hook.
#[derive(Debug, Clone, PartialEq)]
pub struct WassersteinPenalty {
    pub weight: f64,
    pub epsilon: f64,
    pub iters: usize,
}

impl RepresentationPenalty for WassersteinPenalty {
    fn penalty(&self, representations: &Matrix, treatment: &[usize]) -> Result<(f64, Matrix)> {
        let mut p = wasserstein_penalty(representations, treatment, self.epsilon, self.iters)?;
        // The step loss is a batch mean; the penalty is added on that scale.
        p.gradient.scale(self.weight);
        Ok((self.weight * p.value, p.gradient))
    }
}

/// A regulariser prepared for one dataset.
///
/// Zero-weight Wasserstein and zero-gamma dropout configurations prepare to
/// [`Regularizer::None`], so training with them is identical to vanilla
/// training.
#[derive(Debug, Clone, PartialEq)]
pub enum Regularizer {
    None,
    Wasserstein(WassersteinPenalty),
    /// Dropout rate per dataset index.
    PropensityDropout(Vec<f64>),
    BatchMatching(MatchTable),
    /// Pre-matched training indices (with repeats).
    DatasetMatching(Vec<usize>),
}

impl Regularizer {
    /// Fits any needed propensity model on the training split with early
    /// stopping on the validation split.
    pub fn prepare(config: &RegularizerConfig, data: &Dataset, seed: u64) -> Result<Self> {
        config.validate()?;
        let propensity = || {
            PropensityModel::fit(
                &data.covariates,
                &data.treatment,
                data.num_treatments(),
                data.indices(Split::Train),
                data.indices(Split::Validation),
                seed,
            )
        };
        match config.kind {
            RegularizerKind::None => Ok(Regularizer::None),
            RegularizerKind::Wasserstein if config.penalty_weight == 0.0 => Ok(Regularizer::None),
            RegularizerKind::Wasserstein => Ok(Regularizer::Wasserstein(WassersteinPenalty {
                weight: config.penalty_weight,
                epsilon: config.sinkhorn_epsilon,
                iters: config.sinkhorn_iters,
            })),
            RegularizerKind::PropensityDropout if config.gamma == 0.0 => Ok(Regularizer::None),
            RegularizerKind::PropensityDropout => {
                let model = propensity()?;
                let rates = (0..data.len())
                    .map(|i| propensity_dropout_rate(&model.probabilities(data.covariates.row(i)), config.gamma))
                    .collect::<Result<Vec<_>>>()?;
                Ok(Regularizer::PropensityDropout(rates))
            }
            RegularizerKind::PerfectMatch => {
                Ok(Regularizer::BatchMatching(MatchTable::new(data, &propensity()?)?))
            }
            RegularizerKind::PsmPm => {
                let table = MatchTable::new(data, &propensity()?)?;
                Ok(Regularizer::DatasetMatching(table.match_dataset(data.indices(Split::Train))))
            }
        }
    }

    /// Dataset indices iterated over in each epoch.
    pub fn training_indices(&self, train: &[usize]) -> Vec<usize> {
        match self {
            Regularizer::DatasetMatching(matched) => matched.clone(),
            _ => train.to_vec(),
        }
    }

    pub fn augment_batch(&self, indices: &[usize]) -> Vec<usize> {
        match self {
            Regularizer::BatchMatching(table) => table.match_batch(indices),
            _ => indices.to_vec(),
        }
    }

    /// Fills `out` with per-unit dropout rates; returns `false` when no
    /// dropout applies.
    pub fn dropout_rates_into(&self, indices: &[usize], out: &mut Vec<f64>) -> bool {
        match self {
            Regularizer::PropensityDropout(rates) => {
                out.clear();
                out.extend(indices.iter().map(|&i| rates[i]));
                true
            }
            _ => false,
        }
    }

    pub fn penalty(&self) -> Option<&dyn RepresentationPenalty> {
        match self {
            Regularizer::Wasserstein(p) => Some(p),
            _ => None,
        }
    }

    /// Whether training needs the hierarchical architecture's hooks.
    pub fn needs_hooks(&self) -> bool {
        matches!(self, Regularizer::Wasserstein(_) | Regularizer::PropensityDropout(_))
    }
}
