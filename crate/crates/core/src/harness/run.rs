use std::collections::BTreeMap;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ExperimentConfig, Hyperparameters, ModelSpec};
use crate::data::{stream_rng, Dataset, Split};
use crate::knn::KnnModel;
use crate::metrics::{evaluate, nn_mise, Curve, MetricsReport, NnMiseReference, Predictor, Unit};
use crate::model::{fit, ModelKind, NeuralModel, TrainReport, STREAM_INIT};
use crate::regularizers::Regularizer;
use crate::{Error, Result};

/// A trained estimator of any kind.
pub enum Estimator {
    Neural(NeuralModel),
    Knn(KnnModel),
}

impl Predictor for Estimator {
    fn curve<'a>(&'a self, unit: Unit<'a>, t: usize) -> Result<Curve<'a>> {
        match self {
            Estimator::Neural(m) => m.curve(unit.covariates, t),
            Estimator::Knn(m) => m.curve(unit, t),
        }
    }
}

/// Trains one estimator. Neural models are initialised, shuffled and
/// dropped out from streams of `seed`; kNN is deterministic.
pub fn train_estimator(
    spec: &ModelSpec,
    hp: &Hyperparameters,
    data: &Dataset,
    seed: u64,
) -> Result<(Estimator, Option<TrainReport>)> {
    let Some(kind) = spec.kind.neural() else {
        return Ok((Estimator::Knn(KnnModel::fit(data, hp.knn())?), None));
    };
    let regularizer = Regularizer::prepare(&hp.regularizer(&spec.regularizer), data, seed)?;
    if kind == ModelKind::Mlp && regularizer.needs_hooks() {
        return Err(Error::InvalidConfig(format!(
            "regulariser `{}` needs the hierarchical architecture",
            spec.regularizer.kind.name()
        )));
    }
    let mut rng = stream_rng(seed, STREAM_INIT);
    let mut model = NeuralModel::for_dataset(kind, hp.layout(data), data, &mut rng)?;
    let report = fit(&mut model, data, &hp.train_config(seed), &regularizer)?;
    Ok((Estimator::Neural(model), Some(report)))
}

/// Outcome of one `(model, repeat, hyperparameter draw)` run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub model: String,
    pub repeat: usize,
    pub run: usize,
    pub seed: u64,
    pub data_seed: u64,
    pub hyperparameters: Hyperparameters,
    pub validation_nn_mise: Option<f64>,
    pub test: Option<MetricsReport>,
    pub train: Option<TrainReport>,
    /// Wall-clock seconds for training and evaluation.
    pub seconds: f64,
    /// Lowest validation NN-MISE among this model's runs in this repeat.
    pub selected: bool,
    pub error: Option<String>,
}

/// Mean and sample standard deviation of the selected runs' test metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub model: String,
    pub repeats: usize,
    pub failed_repeats: usize,
    pub root_mise_mean: f64,
    pub root_mise_std: f64,
    pub root_dpe_mean: f64,
    pub root_dpe_std: f64,
    pub root_pe_mean: f64,
    pub root_pe_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub records: Vec<RunRecord>,
    pub summary: Vec<SummaryRow>,
}

impl ExperimentResult {
    pub fn summary_for(&self, model: &str) -> Option<&SummaryRow> {
        self.summary.iter().find(|r| r.model == model)
    }

    pub fn selected(&self) -> impl Iterator<Item = &RunRecord> {
        self.records.iter().filter(|r| r.selected)
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Training seeds of one repeat, shared by every model kind.
fn run_seeds(master_seed: u64, repeat: usize, count: usize) -> Vec<u64> {
    let mut rng = stream_rng(master_seed, 2000 + repeat as u64);
    (0..count).map(|_| rng.random()).collect()
}

fn data_seed(config: &ExperimentConfig, repeat: usize) -> u64 {
    if config.redraw_data {
        stream_rng(config.master_seed, 3000 + repeat as u64).random()
    } else {
        config.benchmark.seed
    }
}

fn execute_run(
    spec: &ModelSpec,
    hp: &Hyperparameters,
    data: &Dataset,
    reference: &NnMiseReference,
    seed: u64,
) -> Result<(f64, MetricsReport, Option<TrainReport>)> {
    let (estimator, report) = train_estimator(spec, hp, data, seed)?;
    let selection = nn_mise(&estimator, data, reference)?;
    let mut test = evaluate(&estimator, data, Split::Test, &spec.label(), seed)?;
    test.nn_mise = Some(selection);
    Ok((selection, test, report))
}

/// Random search with NN-MISE selection for every model and repeat.
///
/// Within a repeat every model kind sees the same hyperparameter draws and
/// training seeds. Failed runs are recorded with their error and skipped
/// during selection. Records are ordered by `(model, repeat, run)` with
/// models in configuration order. When `output_dir` is set, per-run JSON
/// files and `summary.csv` are written there.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let mut datasets: BTreeMap<u64, (Dataset, NnMiseReference)> = BTreeMap::new();
    let mut jobs = Vec::new();
    for repeat in 0..config.num_repeats {
        let seed = data_seed(config, repeat);
        if let std::collections::btree_map::Entry::Vacant(slot) = datasets.entry(seed) {
            let spec = crate::data::BenchmarkSpec {
                seed,
                ..config.benchmark.clone()
            };
            let data = Dataset::generate(&spec)?;
            let reference = NnMiseReference::new(&data, config.nn_candidates)?;
            slot.insert((data, reference));
        }
        let draws = config.ranges.draws(config.master_seed, repeat, config.num_hyperopt_runs)?;
        let seeds = run_seeds(config.master_seed, repeat, config.num_hyperopt_runs);
        for (m, spec) in config.models.iter().enumerate() {
            for (run, (hp, &s)) in draws.iter().zip(&seeds).enumerate() {
                jobs.push((m, spec, repeat, run, hp.clone(), s, seed));
            }
        }
    }
    let mut records: Vec<(usize, RunRecord)> = jobs
        .into_par_iter()
        .map(|(m, spec, repeat, run, hp, seed, dseed)| {
            let (data, reference) = &datasets[&dseed];
            let start = Instant::now();
            let outcome = execute_run(spec, &hp, data, reference, seed);
            let seconds = start.elapsed().as_secs_f64();
            let mut record = RunRecord {
                model: spec.label(),
                repeat,
                run,
                seed,
                data_seed: dseed,
                hyperparameters: hp,
                validation_nn_mise: None,
                test: None,
                train: None,
                seconds,
                selected: false,
                error: None,
            };
            match outcome {
                Ok((sel, test, train)) => {
                    record.validation_nn_mise = Some(sel);
                    record.test = Some(test);
                    record.train = train;
                }
                Err(e) => record.error = Some(e.to_string()),
            }
            (m, record)
        })
        .collect();
    records.sort_by_key(|(m, r)| (*m, r.repeat, r.run));

    let mut summary = Vec::new();
    for (m, spec) in config.models.iter().enumerate() {
        let mut chosen = Vec::new();
        let mut failed = 0;
        for repeat in 0..config.num_repeats {
            let best = records
                .iter()
                .enumerate()
                .filter(|(_, (mi, r))| *mi == m && r.repeat == repeat)
                .filter_map(|(pos, (_, r))| r.validation_nn_mise.map(|v| (v, pos)))
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            match best {
                Some((_, pos)) => {
                    records[pos].1.selected = true;
                    chosen.push(records[pos].1.test.clone().expect("successful run has metrics"));
                }
                None => failed += 1,
            }
        }
        let stat = |f: fn(&MetricsReport) -> f64| mean_std(&chosen.iter().map(f).collect::<Vec<_>>());
        let (mise_m, mise_s) = stat(|r| r.root_mise);
        let (dpe_m, dpe_s) = stat(|r| r.root_dpe);
        let (pe_m, pe_s) = stat(|r| r.root_pe);
        summary.push(SummaryRow {
            model: spec.label(),
            repeats: chosen.len(),
            failed_repeats: failed,
            root_mise_mean: mise_m,
            root_mise_std: mise_s,
            root_dpe_mean: dpe_m,
            root_dpe_std: dpe_s,
            root_pe_mean: pe_m,
            root_pe_std: pe_s,
        });
    }
    let result = ExperimentResult {
        records: records.into_iter().map(|(_, r)| r).collect(),
        summary,
    };
    if let Some(dir) = &config.output_dir {
        super::io::write_experiment(dir, &result)?;
    }
    Ok(result)
}

/// Metrics and training time of DRNet at one stratum count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrataRow {
    pub num_strata: usize,
    pub repeats: usize,
    pub root_mise_mean: f64,
    pub root_mise_std: f64,
    pub root_dpe_mean: f64,
    pub root_pe_mean: f64,
    pub num_params: usize,
    /// Total training seconds over all repeats.
    pub train_seconds: f64,
}

/// Trains DRNet at each stratum count with every other hyperparameter held
/// at `config.fixed`. Runs are sequential so timings are comparable, and
/// early stopping is disabled so every count trains for the same number of
/// epochs. Each repeat uses a fresh training seed shared across counts.
pub fn sweep_strata(config: &ExperimentConfig, strata: &[usize]) -> Result<Vec<StrataRow>> {
    config.validate()?;
    let data = Dataset::generate(&config.benchmark)?;
    let spec = config
        .models
        .iter()
        .find(|m| m.kind == super::EstimatorKind::DrNet)
        .cloned()
        .unwrap_or_else(|| ModelSpec::plain(super::EstimatorKind::DrNet));
    let seeds = run_seeds(config.master_seed, 0, config.num_repeats);
    let mut rows = Vec::with_capacity(strata.len());
    for &e in strata {
        let hp = Hyperparameters {
            num_strata: e,
            patience: config.fixed.max_epochs,
            ..config.fixed.clone()
        };
        let mut reports = Vec::new();
        let mut seconds = 0.0;
        let mut num_params = 0;
        for &seed in &seeds {
            let start = Instant::now();
            let (estimator, _) = train_estimator(&spec, &hp, &data, seed)?;
            seconds += start.elapsed().as_secs_f64();
            if let Estimator::Neural(m) = &estimator {
                num_params = m.num_params();
            }
            reports.push(evaluate(&estimator, &data, Split::Test, &spec.label(), seed)?);
        }
        let mise: Vec<f64> = reports.iter().map(|r| r.root_mise).collect();
        let (mise_m, mise_s) = mean_std(&mise);
        rows.push(StrataRow {
            num_strata: e,
            repeats: reports.len(),
            root_mise_mean: mise_m,
            root_mise_std: mise_s,
            root_dpe_mean: mean_std(&reports.iter().map(|r| r.root_dpe).collect::<Vec<_>>()).0,
            root_pe_mean: mean_std(&reports.iter().map(|r| r.root_pe).collect::<Vec<_>>()).0,
            num_params,
            train_seconds: seconds,
        });
    }
    if let Some(dir) = &config.output_dir {
        super::io::write_csv(dir.join("strata.csv"), &rows)?;
    }
    Ok(rows)
}

/// Summary of one model at one assignment bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasRow {
    pub kappa: f64,
    pub model: String,
    pub repeats: usize,
    pub failed_repeats: usize,
    pub root_mise_mean: f64,
    pub root_mise_std: f64,
    pub root_dpe_mean: f64,
    pub root_pe_mean: f64,
}

/// Reruns the full protocol with the benchmark regenerated at each κ. The
/// structural seed is unchanged, so only treatment assignment differs.
pub fn sweep_bias(config: &ExperimentConfig, kappas: &[f64]) -> Result<Vec<BiasRow>> {
    let mut rows = Vec::new();
    for &kappa in kappas {
        let mut cfg = config.clone();
        cfg.benchmark.kappa = kappa;
        cfg.output_dir = config.output_dir.as_ref().map(|d| d.join(format!("kappa-{kappa}")));
        let result = run_experiment(&cfg)?;
        rows.extend(result.summary.into_iter().map(|s| BiasRow {
            kappa,
            model: s.model,
            repeats: s.repeats,
            failed_repeats: s.failed_repeats,
            root_mise_mean: s.root_mise_mean,
            root_mise_std: s.root_mise_std,
            root_dpe_mean: s.root_dpe_mean,
            root_pe_mean: s.root_pe_mean,
        }));
    }
    if let Some(dir) = &config.output_dir {
        super::io::write_csv(dir.join("bias.csv"), &rows)?;
    }
    Ok(rows)
}
