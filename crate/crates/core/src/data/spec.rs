use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BenchmarkKind {
    /// Bag-of-words documents over a latent topic space.
    NewsLike,
    /// Continuous biosignal-style covariates.
    MvicuLike,
    /// High-dimensional expression-style covariates.
    TcgaLike,
}

impl std::str::FromStr for BenchmarkKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "news" | "news-like" | "newslike" => Ok(Self::NewsLike),
            "mvicu" | "mvicu-like" | "mviculike" => Ok(Self::MvicuLike),
            "tcga" | "tcga-like" | "tcgalike" => Ok(Self::TcgaLike),
            other => Err(Error::InvalidConfig(format!("unknown benchmark {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Reduced sample and feature counts for minutes-scale runs.
    Desk,
    /// Dimensions of the original benchmark corpora.
    Full,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Self::Desk),
            "full" => Ok(Self::Full),
            other => Err(Error::InvalidConfig(format!("unknown preset {other:?}"))),
        }
    }
}

/// How the `beta` of an exponential dosage law is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExpParameter {
    Mean,
    Rate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "kebab-case")]
pub enum DosageLaw {
    Exponential { beta: f64, parameter: ExpParameter },
    GaussianPerTreatment { means: Vec<f64>, sd: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistanceMetric {
    EuclideanOnTopics,
    EuclideanOnCovariates,
    /// `1 - cos(a, b)`.
    CosineOnCovariates,
}

/// Full description of a semi-synthetic generating process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSpec {
    pub kind: BenchmarkKind,
    pub num_samples: usize,
    pub num_features: usize,
    pub num_treatments: usize,
    /// Treatment assignment bias; 0 gives uniform assignment.
    pub kappa: f64,
    /// Outcome scale `C`.
    pub scale: f64,
    pub dosage_law: DosageLaw,
    pub distance: DistanceMetric,
    /// Latent topics for the document generator.
    #[serde(default = "default_topics")]
    pub num_topics: usize,
    pub seed: u64,
}

fn default_topics() -> usize {
    50
}

impl BenchmarkSpec {
    /// News-style benchmark with `k` treatments. The full preset uses the
    /// original corpus dimensions (5000 documents, 2870 terms) and the
    /// per-variant bias (κ = 7 for 16 treatments, 10 otherwise).
    pub fn news(num_treatments: usize, preset: Preset, seed: u64) -> Self {
        let (n, p) = match preset {
            Preset::Desk => (2000, 200),
            Preset::Full => (5000, 2870),
        };
        Self {
            kind: BenchmarkKind::NewsLike,
            num_samples: n,
            num_features: p,
            num_treatments,
            kappa: if num_treatments >= 16 { 7.0 } else { 10.0 },
            scale: 50.0,
            dosage_law: DosageLaw::Exponential {
                beta: 0.25,
                parameter: ExpParameter::Mean,
            },
            distance: DistanceMetric::EuclideanOnTopics,
            num_topics: 50,
            seed,
        }
    }

    pub fn mvicu(preset: Preset, seed: u64) -> Self {
        let n = match preset {
            Preset::Desk => 2000,
            Preset::Full => 8040,
        };
        Self {
            kind: BenchmarkKind::MvicuLike,
            num_samples: n,
            num_features: 49,
            num_treatments: 3,
            kappa: 10.0,
            scale: 150.0,
            dosage_law: DosageLaw::GaussianPerTreatment {
                means: vec![0.6, 0.65, 0.4],
                sd: 0.1,
            },
            distance: DistanceMetric::EuclideanOnCovariates,
            num_topics: 50,
            seed,
        }
    }

    pub fn tcga(preset: Preset, seed: u64) -> Self {
        let (n, p) = match preset {
            Preset::Desk => (2000, 200),
            Preset::Full => (9659, 20531),
        };
        Self {
            kind: BenchmarkKind::TcgaLike,
            num_samples: n,
            num_features: p,
            num_treatments: 3,
            kappa: 10.0,
            scale: 50.0,
            dosage_law: DosageLaw::GaussianPerTreatment {
                means: vec![0.65; 3],
                sd: 0.1,
            },
            distance: DistanceMetric::CosineOnCovariates,
            num_topics: 50,
            seed,
        }
    }

    pub fn preset(kind: BenchmarkKind, preset: Preset, seed: u64) -> Self {
        match kind {
            BenchmarkKind::NewsLike => Self::news(2, preset, seed),
            BenchmarkKind::MvicuLike => Self::mvicu(preset, seed),
            BenchmarkKind::TcgaLike => Self::tcga(preset, seed),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.num_treatments < 2 {
            return bad(format!("need >= 2 treatments, got {}", self.num_treatments));
        }
        if self.num_samples == 0 || self.num_features == 0 {
            return bad("benchmark needs samples and features".into());
        }
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return bad(format!("kappa must be >= 0, got {}", self.kappa));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return bad(format!("scale must be > 0, got {}", self.scale));
        }
        if self.kind == BenchmarkKind::NewsLike && self.num_features < self.num_topics {
            return bad(format!(
                "document generator needs at least {} terms, got {}",
                self.num_topics, self.num_features
            ));
        }
        match &self.dosage_law {
            DosageLaw::Exponential { beta, .. } if !(*beta > 0.0) => {
                return bad(format!("exponential beta must be > 0, got {beta}"))
            }
            DosageLaw::GaussianPerTreatment { means, sd } => {
                if means.len() != self.num_treatments {
                    return bad(format!(
                        "{} dosage means for {} treatments",
                        means.len(),
                        self.num_treatments
                    ));
                }
                if !(*sd > 0.0) {
                    return bad(format!("dosage sd must be > 0, got {sd}"));
                }
            }
            _ => {}
        }
        Ok(())
    }
}
