//! k-nearest-neighbour counterfactual regression.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Split, Standardizer};
use crate::metrics::{Curve, Predictor, Unit};
use crate::model::DosageRange;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnnConfig {
    pub neighbours: usize,
    /// Initial dosage bandwidth `h`; doubled until enough candidates exist.
    pub bandwidth: f64,
}

impl Default for KnnConfig {
    fn default() -> Self {
        Self {
            neighbours: 5,
            bandwidth: 0.05,
        }
    }
}

struct Member {
    index: usize,
    z: Vec<f64>,
    dosage: f64,
    outcome: f64,
}

/// Predicts `y_t(s)` as the mean factual outcome of the `K` covariate-nearest
/// training units with treatment `t` whose dosage lies within the bandwidth
/// of `s`. When fewer than `K` units (or the whole group, if smaller) fall in
/// the band, the bandwidth doubles until they do. Distance ties go to the
/// lowest dataset index.
pub struct KnnModel {
    config: KnnConfig,
    scaler: Standardizer,
    groups: Vec<Vec<Member>>,
    ranges: Vec<DosageRange>,
}

impl KnnModel {
    /// Stores the training split of `data` with covariates standardised by
    /// training statistics.
    pub fn fit(data: &Dataset, config: KnnConfig) -> Result<Self> {
        if config.neighbours == 0 {
            return Err(Error::InvalidConfig("kNN needs K >= 1".into()));
        }
        if !(config.bandwidth > 0.0 && config.bandwidth.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "kNN bandwidth must be > 0, got {}",
                config.bandwidth
            )));
        }
        data.check_common_support(Split::Train)?;
        let train = data.indices(Split::Train);
        let scaler = Standardizer::fit(&data.covariates, train)?;
        let k = data.num_treatments();
        let mut groups: Vec<Vec<Member>> = (0..k).map(|_| Vec::new()).collect();
        let mut sorted = train.to_vec();
        sorted.sort_unstable();
        for i in sorted {
            groups[data.treatment[i]].push(Member {
                index: i,
                z: scaler.transform_row(data.covariates.row(i)),
                dosage: data.dosage[i],
                outcome: data.outcome[i],
            });
        }
        Ok(Self {
            config,
            scaler,
            groups,
            ranges: (0..k).map(|t| data.oracle.dosage_range(t)).collect(),
        })
    }

    pub fn config(&self) -> KnnConfig {
        self.config
    }

    /// Group members ordered by covariate distance to `x`, ties by index.
    fn ranked(&self, x: &[f64], t: usize) -> Result<Vec<(f64, usize)>> {
        let group = self.groups.get(t).ok_or(Error::TreatmentOutOfRange {
            treatment: t,
            num_treatments: self.groups.len(),
        })?;
        if x.len() != self.scaler.dim() {
            return Err(Error::DimensionMismatch {
                context: "covariate length",
                expected: self.scaler.dim(),
                actual: x.len(),
            });
        }
        let z = self.scaler.transform_row(x);
        let mut ranked: Vec<(f64, usize)> = group
            .iter()
            .enumerate()
            .map(|(pos, m)| (z.iter().zip(&m.z).map(|(a, b)| (a - b) * (a - b)).sum(), pos))
            .collect();
        ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(group[a.1].index.cmp(&group[b.1].index)));
        Ok(ranked)
    }

    fn predict_ranked(&self, ranked: &[(f64, usize)], t: usize, s: f64) -> f64 {
        let group = &self.groups[t];
        let need = self.config.neighbours.min(group.len());
        let mut h = self.config.bandwidth;
        loop {
            let chosen: Vec<f64> = ranked
                .iter()
                .filter(|&&(_, pos)| (group[pos].dosage - s).abs() <= h)
                .take(need)
                .map(|&(_, pos)| group[pos].outcome)
                .collect();
            if chosen.len() == need {
                return chosen.iter().sum::<f64>() / need as f64;
            }
            h *= 2.0;
        }
    }

    pub fn predict(&self, x: &[f64], t: usize, s: f64) -> Result<f64> {
        let ranked = self.ranked(x, t)?;
        self.ranges[t].check(s)?;
        Ok(self.predict_ranked(&ranked, t, s))
    }
}

impl Predictor for KnnModel {
    fn curve<'a>(&'a self, unit: Unit<'a>, t: usize) -> Result<Curve<'a>> {
        let ranked = self.ranked(unit.covariates, t)?;
        Ok(Box::new(move |s| self.predict_ranked(&ranked, t, s)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{BenchmarkSpec, Preset};

    fn small() -> Dataset {
        let spec = BenchmarkSpec {
            num_samples: 80,
            num_features: 60,
            ..BenchmarkSpec::news(2, Preset::Desk, 9)
        };
        Dataset::generate(&spec).unwrap()
    }

    #[test]
    fn self_neighbour_with_k1() {
        let data = small();
        let model = KnnModel::fit(&data, KnnConfig { neighbours: 1, bandwidth: 0.01 }).unwrap();
        let i = data.indices(Split::Train)[3];
        let got = model.predict(data.covariates.row(i), data.treatment[i], data.dosage[i]).unwrap();
        assert_eq!(got, data.outcome[i]);
    }

    #[test]
    fn prediction_is_within_outcome_bounds() {
        let data = small();
        let model = KnnModel::fit(&data, KnnConfig::default()).unwrap();
        let train = data.indices(Split::Train);
        let (lo, hi) = train.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &i| {
            (l.min(data.outcome[i]), h.max(data.outcome[i]))
        });
        for &n in data.indices(Split::Test) {
            for t in 0..2 {
                let y = model.predict(data.covariates.row(n), t, 0.5).unwrap();
                assert!((lo..=hi).contains(&y));
            }
        }
    }

    #[test]
    fn rejects_bad_config_and_queries() {
        let data = small();
        assert!(KnnModel::fit(&data, KnnConfig { neighbours: 0, bandwidth: 0.1 }).is_err());
        assert!(KnnModel::fit(&data, KnnConfig { neighbours: 1, bandwidth: 0.0 }).is_err());
        let model = KnnModel::fit(&data, KnnConfig::default()).unwrap();
        assert!(model.predict(data.covariates.row(0), 5, 0.5).is_err());
        assert!(model.predict(data.covariates.row(0), 0, 1.5).is_err());
    }
}
