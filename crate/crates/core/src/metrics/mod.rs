//! Counterfactual evaluation of dose-response estimators.
//!
//! All metrics compare a [`Predictor`] against the dataset's ground-truth
//! oracle on one split. Curve integrals use Romberg integration over
//! [`INTEGRATION_INTERVALS`] intervals of each treatment's dosage range and
//! are not normalised by the range width.

mod integrate;
mod nn_mise;
mod optimize;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use integrate::{integration_nodes, romberg, romberg_samples, INTEGRATION_INTERVALS};
pub use nn_mise::{nn_mise, NnMiseReference, DEFAULT_NN_CANDIDATES};
pub use optimize::{optimal_dosage, GRID_POINTS};

use crate::data::{Dataset, GroundTruthOracle, Split};
use crate::model::NeuralModel;
use crate::{Error, Result};

/// A unit to predict for: its dataset index and covariate row.
#[derive(Debug, Clone, Copy)]
pub struct Unit<'a> {
    pub index: usize,
    pub covariates: &'a [f64],
}

pub type Curve<'a> = Box<dyn Fn(f64) -> f64 + Send + 'a>;

/// Anything that yields a dose-response curve per unit and treatment.
///
/// Curves are only evaluated inside the treatment's dosage range.
pub trait Predictor: Sync {
    fn curve<'a>(&'a self, unit: Unit<'a>, t: usize) -> Result<Curve<'a>>;
}

impl Predictor for GroundTruthOracle {
    fn curve<'a>(&'a self, unit: Unit<'a>, t: usize) -> Result<Curve<'a>> {
        self.evaluate(unit.index, t, self.dosage_range(t).min)?;
        let n = unit.index;
        Ok(Box::new(move |s| self.evaluate_unchecked(n, t, s)))
    }
}

impl Predictor for NeuralModel {
    fn curve<'a>(&'a self, unit: Unit<'a>, t: usize) -> Result<Curve<'a>> {
        NeuralModel::curve(self, unit.covariates, t)
    }
}

/// Per-unit, per-treatment quantities shared by all metrics.
struct UnitScores {
    /// `∫ (y − ŷ)² ds` per treatment.
    integrated: Vec<f64>,
    /// `(y(s*) − y(ŝ*))²` per treatment.
    dosage_policy: Vec<f64>,
    policy: f64,
}

fn first_argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn score_unit(predictor: &dyn Predictor, oracle: &GroundTruthOracle, data: &Dataset, n: usize) -> Result<UnitScores> {
    let k = oracle.num_treatments();
    let unit = Unit {
        index: n,
        covariates: data.covariates.row(n),
    };
    let mut integrated = Vec::with_capacity(k);
    let mut dosage_policy = Vec::with_capacity(k);
    let mut true_best = Vec::with_capacity(k);
    let mut model_best = Vec::with_capacity(k);
    let mut true_at_model_choice = Vec::with_capacity(k);
    for t in 0..k {
        let range = oracle.dosage_range(t);
        let truth = |s: f64| oracle.evaluate_unchecked(n, t, s);
        let estimate = predictor.curve(unit, t)?;
        integrated.push(romberg(
            |s| {
                let d = truth(s) - estimate(s);
                d * d
            },
            range.min,
            range.max,
            INTEGRATION_INTERVALS,
        )?);
        let (_, y_star) = optimal_dosage(truth, range)?;
        let (s_hat, y_hat) = optimal_dosage(&estimate, range)?;
        let y_at_hat = truth(s_hat);
        dosage_policy.push((y_star - y_at_hat).powi(2));
        true_best.push(y_star);
        model_best.push(y_hat);
        true_at_model_choice.push(y_at_hat);
    }
    let t_star = first_argmax(&true_best);
    let t_hat = first_argmax(&model_best);
    Ok(UnitScores {
        integrated,
        dosage_policy,
        policy: (true_best[t_star] - true_at_model_choice[t_hat]).powi(2),
    })
}

fn score_split(predictor: &dyn Predictor, data: &Dataset, split: Split) -> Result<Vec<UnitScores>> {
    let indices = data.indices(split);
    if indices.is_empty() {
        return Err(Error::Empty("evaluation split"));
    }
    indices
        .par_iter()
        .map(|&n| score_unit(predictor, &data.oracle, data, n))
        .collect()
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    sum / count as f64
}

/// Mean integrated squared error over units and treatments.
pub fn mise(predictor: &dyn Predictor, data: &Dataset, split: Split) -> Result<f64> {
    let scores = score_split(predictor, data, split)?;
    Ok(mean(scores.iter().flat_map(|u| u.integrated.iter().copied())))
}

/// Mean dosage policy error over units and treatments.
pub fn dpe(predictor: &dyn Predictor, data: &Dataset, split: Split) -> Result<f64> {
    let scores = score_split(predictor, data, split)?;
    Ok(mean(scores.iter().flat_map(|u| u.dosage_policy.iter().copied())))
}

/// Mean policy error of the joint treatment-and-dosage choice. Ties in the
/// best treatment go to the lowest index.
pub fn pe(predictor: &dyn Predictor, data: &Dataset, split: Split) -> Result<f64> {
    let scores = score_split(predictor, data, split)?;
    Ok(mean(scores.iter().map(|u| u.policy)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreatmentMetrics {
    pub treatment: usize,
    pub root_mise: f64,
    pub root_dpe: f64,
}

/// Square-root metrics of one predictor on one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model: String,
    pub seed: u64,
    pub split: Split,
    pub integration_samples: usize,
    pub root_mise: f64,
    pub root_dpe: f64,
    pub root_pe: f64,
    pub per_treatment: Vec<TreatmentMetrics>,
    /// Validation NN-MISE used for selection, when computed.
    pub nn_mise: Option<f64>,
}

impl MetricsReport {
    /// Column order of [`MetricsReport::csv_row`].
    pub const CSV_HEADER: [&'static str; 8] = [
        "model",
        "seed",
        "split",
        "integration_samples",
        "root_mise",
        "root_dpe",
        "root_pe",
        "nn_mise",
    ];

    pub fn csv_row(&self) -> Vec<String> {
        vec![
            self.model.clone(),
            self.seed.to_string(),
            format!("{:?}", self.split).to_lowercase(),
            self.integration_samples.to_string(),
            format!("{:?}", self.root_mise),
            format!("{:?}", self.root_dpe),
            format!("{:?}", self.root_pe),
            self.nn_mise.map(|v| format!("{v:?}")).unwrap_or_default(),
        ]
    }
}

/// √MISE, √DPE and √PE from a single pass over `split`.
pub fn evaluate(
    predictor: &dyn Predictor,
    data: &Dataset,
    split: Split,
    model: &str,
    seed: u64,
) -> Result<MetricsReport> {
    let scores = score_split(predictor, data, split)?;
    let k = data.num_treatments();
    let per_treatment = (0..k)
        .map(|t| TreatmentMetrics {
            treatment: t,
            root_mise: mean(scores.iter().map(|u| u.integrated[t])).sqrt(),
            root_dpe: mean(scores.iter().map(|u| u.dosage_policy[t])).sqrt(),
        })
        .collect();
    Ok(MetricsReport {
        model: model.to_string(),
        seed,
        split,
        integration_samples: INTEGRATION_INTERVALS + 1,
        root_mise: mean(scores.iter().flat_map(|u| u.integrated.iter().copied())).sqrt(),
        root_dpe: mean(scores.iter().flat_map(|u| u.dosage_policy.iter().copied())).sqrt(),
        root_pe: mean(scores.iter().map(|u| u.policy)).sqrt(),
        per_treatment,
        nn_mise: None,
    })
}
