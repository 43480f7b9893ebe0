use rayon::prelude::*;

use super::{integration_nodes, romberg_samples, Predictor, Unit, INTEGRATION_INTERVALS};
use crate::data::{Dataset, Split, Standardizer};
use crate::{Error, Result};

/// Training units shortlisted by dosage before the covariate search.
pub const DEFAULT_NN_CANDIDATES: usize = 5;

/// Nearest-neighbour stand-ins for the unobserved validation curves.
///
/// For validation unit `n`, treatment `t` and integration node `s`, the
/// stand-in is the factual outcome of a training unit with treatment `t`:
/// among the `candidates` training units whose factual dosage is closest to
/// `s`, the one nearest to `n` in standardised covariates. Ties go to the
/// lowest dataset index.
#[derive(Debug, Clone, PartialEq)]
pub struct NnMiseReference {
    units: Vec<usize>,
    num_treatments: usize,
    /// `targets[(u * k + t) * nodes + j]`.
    targets: Vec<f64>,
}

fn closest_by_dosage(data: &Dataset, group: &[usize], s: f64, m: usize) -> Vec<usize> {
    let mut ranked: Vec<(f64, usize)> = group.iter().map(|&i| ((data.dosage[i] - s).abs(), i)).collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    ranked.into_iter().take(m).map(|(_, i)| i).collect()
}

impl NnMiseReference {
    pub fn new(data: &Dataset, candidates: usize) -> Result<Self> {
        if candidates == 0 {
            return Err(Error::InvalidConfig("NN-MISE needs >= 1 candidate".into()));
        }
        data.check_common_support(Split::Train)?;
        let train = data.indices(Split::Train);
        let units = data.indices(Split::Validation).to_vec();
        if units.is_empty() {
            return Err(Error::Empty("validation split"));
        }
        let k = data.num_treatments();
        let scaler = Standardizer::fit(&data.covariates, train)?;
        let shortlist: Vec<Vec<Vec<usize>>> = (0..k)
            .map(|t| {
                let group = data.treatment_group(Split::Train, t);
                let range = data.oracle.dosage_range(t);
                integration_nodes(range.min, range.max, INTEGRATION_INTERVALS)
                    .into_iter()
                    .map(|s| closest_by_dosage(data, &group, s, candidates))
                    .collect()
            })
            .collect();
        let nodes = INTEGRATION_INTERVALS + 1;
        let targets: Vec<Vec<f64>> = units
            .par_iter()
            .map(|&n| {
                let z = scaler.transform_row(data.covariates.row(n));
                let mut buf = vec![0.0; z.len()];
                let mut out = Vec::with_capacity(k * nodes);
                for per_node in &shortlist {
                    for cands in per_node {
                        let mut best = (f64::INFINITY, usize::MAX);
                        for &c in cands {
                            scaler.transform_row_into(data.covariates.row(c), &mut buf);
                            let d: f64 = z.iter().zip(&buf).map(|(a, b)| (a - b) * (a - b)).sum();
                            if d < best.0 || (d == best.0 && c < best.1) {
                                best = (d, c);
                            }
                        }
                        out.push(data.outcome[best.1]);
                    }
                }
                out
            })
            .collect();
        Ok(Self {
            units,
            num_treatments: k,
            targets: targets.concat(),
        })
    }

    pub fn units(&self) -> &[usize] {
        &self.units
    }

    /// Stand-in outcomes at the integration nodes for the `u`-th validation
    /// unit and treatment `t`.
    pub fn targets(&self, u: usize, t: usize) -> &[f64] {
        let nodes = INTEGRATION_INTERVALS + 1;
        let start = (u * self.num_treatments + t) * nodes;
        &self.targets[start..start + nodes]
    }
}

/// Nearest-neighbour MISE of `predictor` on the validation split.
pub fn nn_mise(predictor: &dyn Predictor, data: &Dataset, reference: &NnMiseReference) -> Result<f64> {
    let k = reference.num_treatments;
    let per_unit: Vec<f64> = reference
        .units
        .par_iter()
        .enumerate()
        .map(|(u, &n)| {
            let unit = Unit {
                index: n,
                covariates: data.covariates.row(n),
            };
            let mut total = 0.0;
            for t in 0..k {
                let range = data.oracle.dosage_range(t);
                let curve = predictor.curve(unit, t)?;
                let squared: Vec<f64> = integration_nodes(range.min, range.max, INTEGRATION_INTERVALS)
                    .into_iter()
                    .zip(reference.targets(u, t))
                    .map(|(s, y)| (y - curve(s)).powi(2))
                    .collect();
                total += romberg_samples(&squared, range.min, range.max)?;
            }
            Ok(total)
        })
        .collect::<Result<_>>()?;
    Ok(per_unit.iter().sum::<f64>() / (per_unit.len() * k) as f64)
}
