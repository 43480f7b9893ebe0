use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{stream_rng, Dataset};
use crate::knn::KnnConfig;
use crate::model::{DrNetConfig, TrainConfig};
use crate::regularizers::RegularizerConfig;
use crate::{Error, Result};

/// Random-search space. Discrete ranges list their choices; continuous ones
/// are `[low, high]`, sampled log-uniformly for the learning rate and the
/// penalty weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperparameterRanges {
    pub base_depth: Vec<usize>,
    pub treatment_depth: Vec<usize>,
    pub head_depth: Vec<usize>,
    pub width: Vec<usize>,
    pub learning_rate: [f64; 2],
    pub batch_size: Vec<usize>,
    pub max_epochs: Vec<usize>,
    pub patience: Vec<usize>,
    pub num_strata: Vec<usize>,
    pub penalty_weight: [f64; 2],
    pub gamma: [f64; 2],
    pub knn_neighbours: Vec<usize>,
    pub knn_bandwidth: [f64; 2],
}

impl Default for HyperparameterRanges {
    fn default() -> Self {
        Self {
            base_depth: vec![1, 2],
            treatment_depth: vec![1, 2],
            head_depth: vec![1, 2],
            width: vec![24, 32, 48],
            learning_rate: [1e-3, 5e-3],
            batch_size: vec![32, 64],
            max_epochs: vec![60],
            patience: vec![8],
            num_strata: vec![5],
            penalty_weight: [0.01, 1.0],
            gamma: [0.0, 0.5],
            knn_neighbours: vec![1, 3, 5, 10],
            knn_bandwidth: [0.01, 0.2],
        }
    }
}

/// One point of the search space. Every model kind reads the fields it
/// needs from the same draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub base_depth: usize,
    pub treatment_depth: usize,
    pub head_depth: usize,
    pub width: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub num_strata: usize,
    pub penalty_weight: f64,
    pub gamma: f64,
    pub knn_neighbours: usize,
    pub knn_bandwidth: f64,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Self {
            base_depth: 2,
            treatment_depth: 1,
            head_depth: 2,
            width: 48,
            learning_rate: 2e-3,
            batch_size: 64,
            max_epochs: 60,
            patience: 8,
            num_strata: 5,
            penalty_weight: 0.1,
            gamma: 0.25,
            knn_neighbours: 5,
            knn_bandwidth: 0.05,
        }
    }
}

fn pick<T: Copy, R: Rng + ?Sized>(name: &str, choices: &[T], rng: &mut R) -> Result<T> {
    choices
        .choose(rng)
        .copied()
        .ok_or_else(|| Error::InvalidConfig(format!("hyperparameter range `{name}` is empty")))
}

fn uniform<R: Rng + ?Sized>(name: &str, [lo, hi]: [f64; 2], log: bool, rng: &mut R) -> Result<f64> {
    let valid = lo.is_finite() && hi.is_finite() && lo <= hi && (!log || lo > 0.0);
    if !valid {
        return Err(Error::InvalidConfig(format!("invalid range `{name}`: [{lo}, {hi}]")));
    }
    let u: f64 = rng.random();
    Ok(if log {
        (lo.ln() + u * (hi.ln() - lo.ln())).exp()
    } else {
        lo + u * (hi - lo)
    })
}

impl HyperparameterRanges {
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Hyperparameters> {
        Ok(Hyperparameters {
            base_depth: pick("base_depth", &self.base_depth, rng)?,
            treatment_depth: pick("treatment_depth", &self.treatment_depth, rng)?,
            head_depth: pick("head_depth", &self.head_depth, rng)?,
            width: pick("width", &self.width, rng)?,
            learning_rate: uniform("learning_rate", self.learning_rate, true, rng)?,
            batch_size: pick("batch_size", &self.batch_size, rng)?,
            max_epochs: pick("max_epochs", &self.max_epochs, rng)?,
            patience: pick("patience", &self.patience, rng)?,
            num_strata: pick("num_strata", &self.num_strata, rng)?,
            penalty_weight: uniform("penalty_weight", self.penalty_weight, true, rng)?,
            gamma: uniform("gamma", self.gamma, false, rng)?,
            knn_neighbours: pick("knn_neighbours", &self.knn_neighbours, rng)?,
            knn_bandwidth: uniform("knn_bandwidth", self.knn_bandwidth, false, rng)?,
        })
    }

    /// The `count` configurations searched in one repeat. They depend only on
    /// `(master_seed, repeat)`, so every model kind sees the same sequence.
    pub fn draws(&self, master_seed: u64, repeat: usize, count: usize) -> Result<Vec<Hyperparameters>> {
        let mut rng = stream_rng(master_seed, 1000 + repeat as u64);
        (0..count).map(|_| self.draw(&mut rng)).collect()
    }
}

impl Hyperparameters {
    /// Network layout for `data`. Hidden layers share one width.
    pub fn layout(&self, data: &Dataset) -> DrNetConfig {
        let k = data.num_treatments();
        DrNetConfig {
            num_features: data.num_features(),
            num_treatments: k,
            num_strata: self.num_strata,
            base_depth: self.base_depth,
            base_width: self.width,
            treatment_depth: self.treatment_depth,
            treatment_width: self.width,
            head_depth: self.head_depth,
            head_width: self.width,
            repeat_dosage: true,
            dosage_ranges: (0..k).map(|t| data.oracle.dosage_range(t)).collect(),
        }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            patience: self.patience,
            seed,
        }
    }

    /// `base` with the searched penalty weight and dropout cap.
    pub fn regularizer(&self, base: &RegularizerConfig) -> RegularizerConfig {
        RegularizerConfig {
            penalty_weight: self.penalty_weight,
            gamma: self.gamma,
            ..base.clone()
        }
    }

    pub fn knn(&self) -> KnnConfig {
        KnnConfig {
            neighbours: self.knn_neighbours,
            bandwidth: self.knn_bandwidth,
        }
    }
}
