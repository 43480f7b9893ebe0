use super::PropensityModel;
use crate::data::{Dataset, Split};
use crate::{Error, Result};

/// Nearest training neighbour of every training unit within each treatment
/// group, measured by Euclidean distance between propensity vectors.
///
/// Dosages are ignored. Distance ties go to the lowest dataset index.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchTable {
    num_treatments: usize,
    treatment: Vec<usize>,
    /// `matches[i][t]` for training unit `i`; empty for other units.
    matches: Vec<Vec<usize>>,
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl MatchTable {
    pub fn new(data: &Dataset, propensity: &PropensityModel) -> Result<Self> {
        let k = data.num_treatments();
        if propensity.num_treatments() != k {
            return Err(Error::DimensionMismatch {
                context: "propensity treatments",
                expected: k,
                actual: propensity.num_treatments(),
            });
        }
        data.check_common_support(Split::Train)?;
        let train = data.indices(Split::Train);
        let scores: Vec<Vec<f64>> = train
            .iter()
            .map(|&i| propensity.probabilities(data.covariates.row(i)))
            .collect();
        let mut groups: Vec<Vec<usize>> = vec![Vec::new(); k];
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.sort_by_key(|&pos| train[pos]);
        for pos in order {
            groups[data.treatment[train[pos]]].push(pos);
        }
        let mut matches = vec![Vec::new(); data.len()];
        for (pos, &i) in train.iter().enumerate() {
            matches[i] = groups
                .iter()
                .enumerate()
                .map(|(t, group)| {
                    if t == data.treatment[i] {
                        return i;
                    }
                    let mut best = (f64::INFINITY, usize::MAX);
                    for &cand in group {
                        let d = squared_distance(&scores[pos], &scores[cand]);
                        if d < best.0 {
                            best = (d, train[cand]);
                        }
                    }
                    best.1
                })
                .collect();
        }
        Ok(Self {
            num_treatments: k,
            treatment: data.treatment.clone(),
            matches,
        })
    }

    /// Match of training unit `i` under treatment `t`.
    pub fn matched(&self, i: usize, t: usize) -> Option<usize> {
        self.matches.get(i)?.get(t).copied()
    }

    /// The batch followed by, for every unit and every other treatment, its
    /// matched neighbour. The output has `k ×` the input length.
    pub fn match_batch(&self, indices: &[usize]) -> Vec<usize> {
        let mut out = indices.to_vec();
        out.reserve(indices.len() * (self.num_treatments - 1));
        for &i in indices {
            let own = self.treatment[i];
            for (t, &m) in self.matches[i].iter().enumerate() {
                if t != own {
                    out.push(m);
                }
            }
        }
        out
    }

    /// [`MatchTable::match_batch`] applied once to the whole training split.
    pub fn match_dataset(&self, train: &[usize]) -> Vec<usize> {
        self.match_batch(train)
    }
}
