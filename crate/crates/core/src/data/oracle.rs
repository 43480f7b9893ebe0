//! Closed-form ground-truth dose-response oracle.
//!
//! Every unit `n` and treatment `t` has a true curve
//!
//! ```text
//! y_{n,t}(s) = C · ỹ_t[n] · ỹ_s(n, t, s)
//! ỹ_s(n, t, s) = Σ_i d_i(n, t) · exp(-(s - μ_{t,i})² / (2 σ_{t,i}²)),  i ∈ {0, 1}
//! d(n, t) = softmax(D(z(x_n), z_{t,0}), D(z(x_n), z_{t,1}))
//! ```
//!
//! where ỹ_t[n] ~ N(μ_t, σ_t) + N(0, 0.15) is drawn once per unit when the
//! oracle is built. Each mixture component is peak-normalised to 1 so
//! outcomes live on the scale of `C`. All randomness is consumed at build
//! time; evaluation is deterministic.

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::spec::{BenchmarkSpec, DistanceMetric};
use crate::model::DosageRange;
use crate::nn::Matrix;
use crate::{Error, Result};

const PARAM_MEAN_LOC: f64 = 0.45;
const PARAM_MEAN_SCALE: f64 = 0.15;
const PARAM_SD_LOC: f64 = 0.1;
const PARAM_SD_SCALE: f64 = 0.05;
const OUTCOME_NOISE_SD: f64 = 0.15;

/// Mean/sd pair of one Gaussian outcome or dose component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianParams {
    pub mean: f64,
    pub sd: f64,
}

impl GaussianParams {
    /// Gaussian density shape with peak value 1.
    #[inline]
    pub fn shape(&self, s: f64) -> f64 {
        let z = (s - self.mean) / self.sd;
        (-0.5 * z * z).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthOracle {
    pub scale: f64,
    pub dosage_ranges: Vec<DosageRange>,
    /// Outcome distribution attached to each treatment centroid.
    pub outcome_params: Vec<GaussianParams>,
    /// Two dose-response components per treatment.
    pub dose_params: Vec<[GaussianParams; 2]>,
    /// Row indices of the units picked as treatment centroids.
    pub treatment_centroids: Vec<usize>,
    /// Row indices of the units picked as dose centroids, two per treatment.
    pub dose_centroids: Vec<[usize; 2]>,
    /// ỹ_t per unit, `N × k`.
    pub base_outcome: Matrix,
    /// Mixture weights per unit, `N × 2k` laid out as `[t0_i0, t0_i1, t1_i0, ...]`.
    pub mixture_weights: Matrix,
}

fn positive_normal<R: Rng + ?Sized>(dist: &Normal<f64>, rng: &mut R) -> f64 {
    loop {
        let v = dist.sample(rng);
        if v > 0.0 {
            return v;
        }
    }
}

fn distance(metric: DistanceMetric, a: &[f64], b: &[f64]) -> f64 {
    match metric {
        DistanceMetric::EuclideanOnTopics | DistanceMetric::EuclideanOnCovariates => a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt(),
        DistanceMetric::CosineOnCovariates => {
            let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            if na == 0.0 || nb == 0.0 {
                1.0
            } else {
                1.0 - dot / (na * nb)
            }
        }
    }
}

/// Numerically stable two-way softmax.
fn softmax2(a: f64, b: f64) -> [f64; 2] {
    let m = a.max(b);
    let (ea, eb) = ((a - m).exp(), (b - m).exp());
    let total = ea + eb;
    [ea / total, eb / total]
}

/// Draws every parameter of the outcome process from `embedding` rows.
pub fn build_oracle<R: Rng + ?Sized>(
    spec: &BenchmarkSpec,
    embedding: &Matrix,
    rng: &mut R,
) -> Result<GroundTruthOracle> {
    let (n, k) = (embedding.rows(), spec.num_treatments);
    if 3 * k > n {
        return Err(Error::InvalidConfig(format!(
            "{k} treatments need {} centroid units but only {n} samples exist",
            3 * k
        )));
    }
    let mean_dist = Normal::new(PARAM_MEAN_LOC, PARAM_MEAN_SCALE).expect("valid normal");
    let sd_dist = Normal::new(PARAM_SD_LOC, PARAM_SD_SCALE).expect("valid normal");
    let draw_params = |rng: &mut R| GaussianParams {
        mean: mean_dist.sample(rng),
        sd: positive_normal(&sd_dist, rng),
    };

    let picks = sample(rng, n, 3 * k).into_vec();
    let treatment_centroids = picks[..k].to_vec();
    let dose_centroids: Vec<[usize; 2]> = (0..k)
        .map(|t| [picks[k + 2 * t], picks[k + 2 * t + 1]])
        .collect();
    let outcome_params: Vec<GaussianParams> = (0..k).map(|_| draw_params(rng)).collect();
    let dose_params: Vec<[GaussianParams; 2]> = (0..k)
        .map(|_| [draw_params(rng), draw_params(rng)])
        .collect();

    let noise = Normal::new(0.0, OUTCOME_NOISE_SD).expect("valid normal");
    let mut base_outcome = Matrix::zeros(n, k);
    for i in 0..n {
        for (t, p) in outcome_params.iter().enumerate() {
            let ideal = Normal::new(p.mean, p.sd).expect("positive sd").sample(rng);
            base_outcome.set(i, t, ideal + noise.sample(rng));
        }
    }

    let mut mixture_weights = Matrix::zeros(n, 2 * k);
    for i in 0..n {
        let z = embedding.row(i);
        for (t, [c0, c1]) in dose_centroids.iter().enumerate() {
            let d0 = distance(spec.distance, z, embedding.row(*c0));
            let d1 = distance(spec.distance, z, embedding.row(*c1));
            let [w0, w1] = softmax2(d0, d1);
            mixture_weights.set(i, 2 * t, w0);
            mixture_weights.set(i, 2 * t + 1, w1);
        }
    }

    Ok(GroundTruthOracle {
        scale: spec.scale,
        dosage_ranges: vec![DosageRange::UNIT; k],
        outcome_params,
        dose_params,
        treatment_centroids,
        dose_centroids,
        base_outcome,
        mixture_weights,
    })
}

impl GroundTruthOracle {
    pub fn num_units(&self) -> usize {
        self.base_outcome.rows()
    }

    pub fn num_treatments(&self) -> usize {
        self.dosage_ranges.len()
    }

    pub fn dosage_range(&self, t: usize) -> DosageRange {
        self.dosage_ranges[t]
    }

    /// Dose factor ỹ_s for unit `n` under treatment `t`, without range checks.
    #[inline]
    pub fn dose_factor(&self, n: usize, t: usize, s: f64) -> f64 {
        let w = self.mixture_weights.row(n);
        let [a, b] = &self.dose_params[t];
        w[2 * t] * a.shape(s) + w[2 * t + 1] * b.shape(s)
    }

    /// Score `ỹ_t · ỹ_s(s)` that drives treatment assignment.
    #[inline]
    pub fn assignment_score(&self, n: usize, t: usize, s: f64) -> f64 {
        self.base_outcome.get(n, t) * self.dose_factor(n, t, s)
    }

    /// True outcome without bounds checks.
    #[inline]
    pub fn evaluate_unchecked(&self, n: usize, t: usize, s: f64) -> f64 {
        self.scale * self.assignment_score(n, t, s)
    }

    /// True outcome `y_{n,t}(s)`.
    pub fn evaluate(&self, n: usize, t: usize, s: f64) -> Result<f64> {
        if n >= self.num_units() {
            return Err(Error::SampleOutOfRange {
                index: n,
                len: self.num_units(),
            });
        }
        if t >= self.num_treatments() {
            return Err(Error::TreatmentOutOfRange {
                treatment: t,
                num_treatments: self.num_treatments(),
            });
        }
        self.dosage_ranges[t].check(s)?;
        Ok(self.evaluate_unchecked(n, t, s))
    }

    /// Copy with every outcome multiplied by `factor`.
    pub fn rescaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.scale *= factor;
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::covariates::generate_covariates;
    use crate::data::spec::Preset;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn oracle(spec: &BenchmarkSpec) -> GroundTruthOracle {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let cov = generate_covariates(spec, &mut rng).unwrap();
        build_oracle(spec, &cov.embedding, &mut rng).unwrap()
    }

    fn small(mut spec: BenchmarkSpec) -> BenchmarkSpec {
        spec.num_samples = 120;
        spec
    }

    #[test]
    fn sds_are_positive_and_weights_normalised() {
        for spec in [
            small(BenchmarkSpec::news(4, Preset::Desk, 3)),
            small(BenchmarkSpec::mvicu(Preset::Desk, 3)),
            small(BenchmarkSpec::tcga(Preset::Desk, 3)),
        ] {
            let o = oracle(&spec);
            assert!(o.outcome_params.iter().all(|p| p.sd > 0.0));
            assert!(o.dose_params.iter().flatten().all(|p| p.sd > 0.0));
            for i in 0..o.num_units() {
                let w = o.mixture_weights.row(i);
                for t in 0..o.num_treatments() {
                    assert!((w[2 * t] + w[2 * t + 1] - 1.0).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn news_outcome_is_scaled_product() {
        let spec = small(BenchmarkSpec::news(2, Preset::Desk, 8));
        assert_eq!(spec.scale, 50.0);
        let o = oracle(&spec);
        let s = 0.37;
        let y = o.evaluate(5, 1, s).unwrap();
        let expected = 50.0 * (o.base_outcome.get(5, 1) * o.dose_factor(5, 1, s));
        assert_eq!(y, expected);
    }

    #[test]
    fn evaluation_is_deterministic_and_linear_in_scale() {
        let o = oracle(&small(BenchmarkSpec::mvicu(Preset::Desk, 1)));
        let doubled = o.rescaled(2.0);
        for s in [0.001, 0.3, 0.5, 1.0] {
            let a = o.evaluate(3, 2, s).unwrap();
            assert_eq!(a, o.evaluate(3, 2, s).unwrap());
            assert_eq!(doubled.evaluate(3, 2, s).unwrap(), 2.0 * a);
        }
    }

    #[test]
    fn out_of_range_arguments_rejected() {
        let o = oracle(&small(BenchmarkSpec::news(2, Preset::Desk, 1)));
        assert!(o.evaluate(10_000, 0, 0.5).is_err());
        assert!(o.evaluate(0, 2, 0.5).is_err());
        assert!(o.evaluate(0, 0, 1.5).is_err());
        assert!(o.evaluate(0, 0, 0.0).is_err());
    }

    #[test]
    fn mixture_maximum_lies_between_component_means() {
        // Grid oracle: a two-component mixture with both weights positive peaks
        // between its component means.
        let mut o = oracle(&small(BenchmarkSpec::news(2, Preset::Desk, 4)));
        let cases = [(0.2, 0.08, 0.7, 0.1), (0.35, 0.05, 0.55, 0.2), (0.8, 0.1, 0.3, 0.03)];
        for (m0, s0, m1, s1) in cases {
            o.dose_params[0] = [
                GaussianParams { mean: m0, sd: s0 },
                GaussianParams { mean: m1, sd: s1 },
            ];
            for n in 0..10 {
                let w = o.mixture_weights.row(n);
                assert!(w[0] > 0.0 && w[1] > 0.0);
                let r = o.dosage_range(0);
                let (best_s, _) = (0..1000)
                    .map(|i| r.min + r.width() * i as f64 / 999.0)
                    .map(|s| (s, o.dose_factor(n, 0, s)))
                    .fold((0.0, f64::NEG_INFINITY), |acc, (s, v)| {
                        if v > acc.1 {
                            (s, v)
                        } else {
                            acc
                        }
                    });
                assert!(best_s >= m0.min(m1) - 1e-3 && best_s <= m0.max(m1) + 1e-3);
            }
        }
    }

    #[test]
    fn too_many_treatments_for_samples() {
        let mut spec = BenchmarkSpec::news(4, Preset::Desk, 0);
        spec.num_samples = 6;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cov = generate_covariates(&spec, &mut rng).unwrap();
        assert!(build_oracle(&spec, &cov.embedding, &mut rng).is_err());
    }
}
