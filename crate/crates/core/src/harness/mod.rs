//! Experiment drivers: seeded random search, NN-MISE model selection,
//! repeated runs and sweeps over dosage strata and assignment bias.

mod hyper;
mod io;
mod run;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

pub use hyper::{HyperparameterRanges, Hyperparameters};
pub use io::{load_config, load_experiment_config, write_csv};
pub use run::{
    run_experiment, sweep_bias, sweep_strata, train_estimator, BiasRow, Estimator, ExperimentResult,
    RunRecord, StrataRow, SummaryRow,
};

use crate::data::{BenchmarkKind, BenchmarkSpec, Preset};
use crate::model::ModelKind;
use crate::regularizers::{RegularizerConfig, RegularizerKind};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Mlp,
    Tarnet,
    DrNet,
    Knn,
}

impl EstimatorKind {
    pub fn neural(self) -> Option<ModelKind> {
        match self {
            EstimatorKind::Mlp => Some(ModelKind::Mlp),
            EstimatorKind::Tarnet => Some(ModelKind::Tarnet),
            EstimatorKind::DrNet => Some(ModelKind::DrNet),
            EstimatorKind::Knn => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Knn => "knn",
            other => other.neural().expect("neural kind").name(),
        }
    }
}

impl std::str::FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("knn") {
            return Ok(EstimatorKind::Knn);
        }
        Ok(match s.parse::<ModelKind>()? {
            ModelKind::Mlp => EstimatorKind::Mlp,
            ModelKind::Tarnet => EstimatorKind::Tarnet,
            ModelKind::DrNet => EstimatorKind::DrNet,
        })
    }
}

/// An estimator and the regulariser it trains with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: EstimatorKind,
    #[serde(default)]
    pub regularizer: RegularizerConfig,
}

impl ModelSpec {
    pub fn plain(kind: EstimatorKind) -> Self {
        Self {
            kind,
            regularizer: RegularizerConfig::none(),
        }
    }

    /// Label such as `drnet` or `drnet+wasserstein`.
    pub fn label(&self) -> String {
        match self.regularizer.kind {
            RegularizerKind::None => self.kind.name().to_string(),
            r => format!("{}+{}", self.kind.name(), r.name()),
        }
    }

    /// Parses `kind` or `kind+regulariser`.
    pub fn parse(s: &str) -> Result<Self> {
        let (kind, reg) = match s.split_once('+') {
            Some((k, r)) => (k, Some(r)),
            None => (s, None),
        };
        Ok(Self {
            kind: kind.trim().parse()?,
            regularizer: match reg {
                Some(r) => RegularizerConfig::of_kind(r.trim().parse()?),
                None => RegularizerConfig::none(),
            },
        })
    }
}

/// Full protocol description; mirrors the `--config` file format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub benchmark: BenchmarkSpec,
    pub models: Vec<ModelSpec>,
    pub num_hyperopt_runs: usize,
    pub num_repeats: usize,
    #[serde(default)]
    pub ranges: HyperparameterRanges,
    /// Configuration used by the sweeps, which hold hyperparameters fixed.
    #[serde(default)]
    pub fixed: Hyperparameters,
    pub master_seed: u64,
    /// Regenerate the dataset for every repeat instead of re-seeding only the
    /// models.
    #[serde(default)]
    pub redraw_data: bool,
    /// Dosage shortlist size of the NN-MISE neighbour rule.
    #[serde(default = "default_candidates")]
    pub nn_candidates: usize,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn default_candidates() -> usize {
    crate::metrics::DEFAULT_NN_CANDIDATES
}

/// Hyperparameter search budget per model: 5 runs on the expression-style
/// benchmark, 10 elsewhere.
pub fn default_hyperopt_runs(kind: BenchmarkKind) -> usize {
    match kind {
        BenchmarkKind::TcgaLike => 5,
        BenchmarkKind::NewsLike | BenchmarkKind::MvicuLike => 10,
    }
}

impl ExperimentConfig {
    /// DRNet, TARNET and MLP on a preset benchmark with the default budget
    /// and 5 repeats.
    pub fn for_benchmark(kind: BenchmarkKind, preset: Preset, seed: u64) -> Self {
        Self {
            benchmark: BenchmarkSpec::preset(kind, preset, seed),
            models: [EstimatorKind::DrNet, EstimatorKind::Tarnet, EstimatorKind::Mlp]
                .into_iter()
                .map(ModelSpec::plain)
                .collect(),
            num_hyperopt_runs: default_hyperopt_runs(kind),
            num_repeats: 5,
            ranges: HyperparameterRanges::default(),
            fixed: Hyperparameters::default(),
            master_seed: seed,
            redraw_data: false,
            nn_candidates: default_candidates(),
            output_dir: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.benchmark.validate()?;
        if self.models.is_empty() {
            return Err(Error::InvalidConfig("no models to run".into()));
        }
        if self.num_hyperopt_runs == 0 || self.num_repeats == 0 {
            return Err(Error::InvalidConfig("hyperopt runs and repeats must be >= 1".into()));
        }
        if self.nn_candidates == 0 {
            return Err(Error::InvalidConfig("nn_candidates must be >= 1".into()));
        }
        for m in &self.models {
            m.regularizer.validate()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_specs_parse_and_label() {
        let spec = ModelSpec::parse("drnet+wasserstein").unwrap();
        assert_eq!(spec.kind, EstimatorKind::DrNet);
        assert_eq!(spec.regularizer.kind, RegularizerKind::Wasserstein);
        assert_eq!(spec.label(), "drnet+wasserstein");
        assert_eq!(ModelSpec::parse("knn").unwrap().label(), "knn");
        assert!(ModelSpec::parse("drnet+magic").is_err());
        assert!(ModelSpec::parse("forest").is_err());
    }

    #[test]
    fn draws_depend_only_on_seed_and_repeat() {
        let ranges = HyperparameterRanges::default();
        let a = ranges.draws(7, 0, 4).unwrap();
        assert_eq!(a, ranges.draws(7, 0, 4).unwrap());
        assert_ne!(a, ranges.draws(7, 1, 4).unwrap());
        assert_eq!(a[..2], ranges.draws(7, 0, 2).unwrap()[..]);
    }

    #[test]
    fn draws_respect_ranges() {
        let ranges = HyperparameterRanges::default();
        for hp in ranges.draws(3, 0, 50).unwrap() {
            assert!(ranges.width.contains(&hp.width));
            assert!((ranges.learning_rate[0]..=ranges.learning_rate[1]).contains(&hp.learning_rate));
            assert!((ranges.gamma[0]..=ranges.gamma[1]).contains(&hp.gamma));
        }
        let empty = HyperparameterRanges {
            width: vec![],
            ..HyperparameterRanges::default()
        };
        assert!(empty.draws(0, 0, 1).is_err());
    }

    #[test]
    fn default_budgets() {
        assert_eq!(default_hyperopt_runs(BenchmarkKind::NewsLike), 10);
        assert_eq!(default_hyperopt_runs(BenchmarkKind::MvicuLike), 10);
        assert_eq!(default_hyperopt_runs(BenchmarkKind::TcgaLike), 5);
        let c = ExperimentConfig::for_benchmark(BenchmarkKind::TcgaLike, Preset::Desk, 1);
        assert_eq!(c.num_hyperopt_runs, 5);
    }

    #[test]
    fn config_validation() {
        let mut c = ExperimentConfig::for_benchmark(BenchmarkKind::NewsLike, Preset::Desk, 1);
        assert!(c.validate().is_ok());
        c.num_repeats = 0;
        assert!(c.validate().is_err());
        c.num_repeats = 1;
        c.models.clear();
        assert!(c.validate().is_err());
    }
}
