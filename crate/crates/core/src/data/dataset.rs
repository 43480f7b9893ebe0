use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use super::covariates::{embed_external, generate_covariates};
use super::oracle::{build_oracle, GroundTruthOracle};
use super::spec::{BenchmarkSpec, DosageLaw, ExpParameter};
use crate::nn::Matrix;
use crate::{Error, Result};

// Independent random streams so that changing one stage (e.g. κ) leaves the
// draws of every other stage unchanged.
const STREAM_COVARIATES: u64 = 1;
const STREAM_ORACLE: u64 = 2;
const STREAM_ASSIGNMENT: u64 = 3;
const STREAM_SPLIT: u64 = 4;

const TRAIN_FRACTION: f64 = 0.63;
const VALIDATION_FRACTION: f64 = 0.27;

/// ChaCha generator for one named stream of a seed.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

/// Disjoint, exhaustive index sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

impl Splits {
    /// Random 63/27/10 partition of `0..n`.
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(rng);
        let n_train = (TRAIN_FRACTION * n as f64).round() as usize;
        let n_val = ((VALIDATION_FRACTION * n as f64).round() as usize).min(n - n_train);
        let test = idx.split_off(n_train + n_val);
        let validation = idx.split_off(n_train);
        Self {
            train: idx,
            validation,
            test,
        }
    }

    pub fn get(&self, split: Split) -> &[usize] {
        match split {
            Split::Train => &self.train,
            Split::Validation => &self.validation,
            Split::Test => &self.test,
        }
    }
}

/// Factual treatment, dosage and outcome per unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Factuals {
    pub treatment: Vec<usize>,
    pub dosage: Vec<f64>,
    pub outcome: Vec<f64>,
}

/// Observational dataset with its ground-truth oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub spec: BenchmarkSpec,
    pub covariates: Matrix,
    pub treatment: Vec<usize>,
    pub dosage: Vec<f64>,
    pub outcome: Vec<f64>,
    pub splits: Splits,
    pub oracle: GroundTruthOracle,
}

/// Draws one factual dosage for treatment `t` and clips it into the
/// treatment's range.
fn draw_dosage<R: Rng + ?Sized>(
    law: &DosageLaw,
    t: usize,
    range: crate::model::DosageRange,
    rng: &mut R,
) -> f64 {
    let raw = match law {
        DosageLaw::Exponential { beta, parameter } => {
            let rate = match parameter {
                ExpParameter::Mean => 1.0 / beta,
                ExpParameter::Rate => *beta,
            };
            Exp::new(rate).expect("positive rate").sample(rng)
        }
        DosageLaw::GaussianPerTreatment { means, sd } => Normal::new(means[t], *sd)
            .expect("positive sd")
            .sample(rng),
    };
    range.clamp(raw)
}

/// Categorical draw from `softmax(kappa · scores)`.
pub fn sample_treatment<R: Rng + ?Sized>(scores: &[f64], kappa: f64, rng: &mut R) -> usize {
    let probs = assignment_probabilities(scores, kappa);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (t, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return t;
        }
    }
    probs.len() - 1
}

/// `softmax(kappa · scores)`.
pub fn assignment_probabilities(scores: &[f64], kappa: f64) -> Vec<f64> {
    let logits: Vec<f64> = scores.iter().map(|s| kappa * s).collect();
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// For every unit: one dosage per treatment is drawn first, the treatment
/// follows `softmax(κ ỹ_t ỹ_s(s_t))`, and the outcome is read from the oracle.
pub fn assign_treatments_and_dosages<R: Rng + ?Sized>(
    oracle: &GroundTruthOracle,
    spec: &BenchmarkSpec,
    rng: &mut R,
) -> Result<Factuals> {
    spec.validate()?;
    let (n, k) = (oracle.num_units(), oracle.num_treatments());
    let mut factuals = Factuals {
        treatment: Vec::with_capacity(n),
        dosage: Vec::with_capacity(n),
        outcome: Vec::with_capacity(n),
    };
    let mut doses = vec![0.0; k];
    let mut scores = vec![0.0; k];
    for i in 0..n {
        for t in 0..k {
            doses[t] = draw_dosage(&spec.dosage_law, t, oracle.dosage_range(t), rng);
            scores[t] = oracle.assignment_score(i, t, doses[t]);
        }
        let t = sample_treatment(&scores, spec.kappa, rng);
        factuals.treatment.push(t);
        factuals.dosage.push(doses[t]);
        factuals.outcome.push(oracle.evaluate(i, t, doses[t])?);
    }
    Ok(factuals)
}

const DATASET_FORMAT: &str = "drnet-dataset";
const DATASET_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct DatasetFile {
    format: String,
    version: u32,
    dataset: Dataset,
}

impl Dataset {
    /// Generates the full benchmark from `spec.seed`.
    pub fn generate(spec: &BenchmarkSpec) -> Result<Self> {
        spec.validate()?;
        let cov = generate_covariates(spec, &mut stream_rng(spec.seed, STREAM_COVARIATES))?;
        Self::assemble(spec, cov.x, &cov.embedding)
    }

    /// Runs the outcome and assignment process over user-supplied covariates.
    /// `spec.num_samples` and `spec.num_features` are taken from `x`.
    pub fn from_covariates(spec: &BenchmarkSpec, x: Matrix) -> Result<Self> {
        let mut spec = spec.clone();
        spec.num_samples = x.rows();
        spec.num_features = x.cols();
        spec.num_topics = spec.num_topics.min(x.cols());
        spec.validate()?;
        let embedding = embed_external(spec.kind, &x);
        Self::assemble(&spec, x, &embedding)
    }

    fn assemble(spec: &BenchmarkSpec, x: Matrix, embedding: &Matrix) -> Result<Self> {
        let oracle = build_oracle(spec, embedding, &mut stream_rng(spec.seed, STREAM_ORACLE))?;
        let factuals =
            assign_treatments_and_dosages(&oracle, spec, &mut stream_rng(spec.seed, STREAM_ASSIGNMENT))?;
        let splits = Splits::random(x.rows(), &mut stream_rng(spec.seed, STREAM_SPLIT));
        Ok(Self {
            spec: spec.clone(),
            covariates: x,
            treatment: factuals.treatment,
            dosage: factuals.dosage,
            outcome: factuals.outcome,
            splits,
            oracle,
        })
    }

    pub fn len(&self) -> usize {
        self.covariates.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_features(&self) -> usize {
        self.covariates.cols()
    }

    pub fn num_treatments(&self) -> usize {
        self.oracle.num_treatments()
    }

    pub fn indices(&self, split: Split) -> &[usize] {
        self.splits.get(split)
    }

    /// Units in `split` that received treatment `t`.
    pub fn treatment_group(&self, split: Split, t: usize) -> Vec<usize> {
        self.indices(split)
            .iter()
            .copied()
            .filter(|&i| self.treatment[i] == t)
            .collect()
    }

    /// Errors unless every treatment occurs in `split`.
    pub fn check_common_support(&self, split: Split) -> Result<()> {
        let mut seen = vec![false; self.num_treatments()];
        for &i in self.indices(split) {
            seen[self.treatment[i]] = true;
        }
        match seen.iter().position(|s| !s) {
            Some(t) => Err(Error::CommonSupport {
                treatment: t,
                split: match split {
                    Split::Train => "training",
                    Split::Validation => "validation",
                    Split::Test => "test",
                },
            }),
            None => Ok(()),
        }
    }

    /// Writes the dataset as versioned JSON.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let wrapper = DatasetFile {
            format: DATASET_FORMAT.into(),
            version: DATASET_VERSION,
            dataset: self.clone(),
        };
        serde_json::to_writer(BufWriter::new(file), &wrapper)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let wrapper: DatasetFile = serde_json::from_reader(BufReader::new(file))?;
        if wrapper.format != DATASET_FORMAT {
            return Err(Error::Config(format!(
                "{} is a {:?} file, not a dataset",
                path.display(),
                wrapper.format
            )));
        }
        if wrapper.version != DATASET_VERSION {
            return Err(Error::FormatVersion {
                kind: "dataset",
                found: wrapper.version,
                expected: DATASET_VERSION,
            });
        }
        Ok(wrapper.dataset)
    }
}
