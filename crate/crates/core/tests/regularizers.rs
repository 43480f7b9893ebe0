mod common;

use drnet::data::{stream_rng, Dataset, Split};
use drnet::model::{fit, DrNetConfig, ModelKind, NeuralModel, TrainConfig, STREAM_INIT};
use drnet::nn::Matrix;
use drnet::regularizers::{
    propensity_dropout_rate, sinkhorn_distance, MatchTable, PropensityModel, Regularizer, RegularizerConfig,
    RegularizerKind,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn cloud(rows: usize, cols: usize, shift: f64, rng: &mut ChaCha8Rng) -> Matrix {
    let data = (0..rows * cols)
        .map(|i| {
            let z: f64 = StandardNormal.sample(rng);
            z + if i % cols == 0 { shift } else { 0.0 }
        })
        .collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn sinkhorn_is_symmetric(seed in any::<u64>(), n in 1usize..24, m in 1usize..24, dim in 1usize..5, shift in -3.0..3.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = cloud(n, dim, 0.0, &mut rng);
        let b = cloud(m, dim, shift, &mut rng);
        let ab = sinkhorn_distance(&a, &b, 0.05, 200).unwrap().value;
        let ba = sinkhorn_distance(&b, &a, 0.05, 200).unwrap().value;
        prop_assert!((ab - ba).abs() <= 1e-9 * ab.abs().max(1.0), "{} vs {}", ab, ba);
        prop_assert!(ab >= 0.0);
    }
}

#[test]
fn sinkhorn_self_distance_vanishes() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for n in [1, 2, 17, 64, 256] {
        let a = cloud(n, 4, 0.0, &mut rng);
        let d = sinkhorn_distance(&a, &a.clone(), 0.01, 100).unwrap().value;
        assert!(d.abs() <= 1e-6, "n = {n}: {d}");
    }
}

#[test]
fn sinkhorn_recovers_the_shift_between_gaussian_clouds() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = cloud(200, 2, 0.0, &mut rng);
    let b = cloud(200, 2, 10.0, &mut rng);
    let d = sinkhorn_distance(&a, &b, 0.01, 200).unwrap();
    assert!((d.value - 100.0).abs() <= 10.0, "{}", d.value);
}

#[test]
fn dropout_rate_endpoints_are_exact() {
    for k in [2, 3, 7, 16] {
        let uniform = vec![1.0 / k as f64; k];
        assert_eq!(propensity_dropout_rate(&uniform, 0.3).unwrap(), 0.0);
        let mut one_hot = vec![0.0; k];
        one_hot[k / 2] = 1.0;
        assert_eq!(propensity_dropout_rate(&one_hot, 0.3).unwrap(), 0.3);
    }
}

fn train_drnet(data: &Dataset, regularizer: &Regularizer, seed: u64) -> NeuralModel {
    let config = DrNetConfig {
        num_features: data.num_features(),
        num_treatments: data.num_treatments(),
        num_strata: 3,
        base_depth: 1,
        base_width: 16,
        treatment_depth: 1,
        treatment_width: 16,
        head_depth: 1,
        head_width: 16,
        repeat_dosage: true,
        dosage_ranges: data.oracle.dosage_ranges.clone(),
    };
    let mut model = NeuralModel::for_dataset(ModelKind::DrNet, config, data, &mut stream_rng(seed, STREAM_INIT)).unwrap();
    let train = TrainConfig {
        learning_rate: 3e-3,
        batch_size: 32,
        max_epochs: 5,
        patience: 5,
        seed,
    };
    fit(&mut model, data, &train, regularizer).unwrap();
    model
}

#[test]
fn zero_weight_wasserstein_matches_plain_training() {
    let data = common::small_news(3, 300);
    let plain = train_drnet(&data, &Regularizer::None, 4);
    let config = RegularizerConfig {
        penalty_weight: 0.0,
        ..RegularizerConfig::of_kind(RegularizerKind::Wasserstein)
    };
    let prepared = Regularizer::prepare(&config, &data, 4).unwrap();
    assert_eq!(train_drnet(&data, &prepared, 4), plain);
    // The penalty path itself, with a zero weight, leaves training unchanged.
    let zero = Regularizer::Wasserstein(drnet::regularizers::WassersteinPenalty {
        weight: 0.0,
        epsilon: 0.01,
        iters: 50,
    });
    assert_eq!(train_drnet(&data, &zero, 4).tensors(), plain.tensors());
    let weighted = Regularizer::prepare(&RegularizerConfig::of_kind(RegularizerKind::Wasserstein), &data, 4).unwrap();
    assert_ne!(train_drnet(&data, &weighted, 4).tensors(), plain.tensors());
}

fn propensity_table(data: &Dataset) -> (PropensityModel, MatchTable) {
    let model = PropensityModel::fit(
        &data.covariates,
        &data.treatment,
        data.num_treatments(),
        data.indices(Split::Train),
        data.indices(Split::Validation),
        5,
    )
    .unwrap();
    let table = MatchTable::new(data, &model).unwrap();
    (model, table)
}

fn brute_force_match(data: &Dataset, model: &PropensityModel, i: usize, t: usize) -> usize {
    let p = model.probabilities(data.covariates.row(i));
    let mut best = (f64::INFINITY, usize::MAX);
    for &j in data.indices(Split::Train) {
        if data.treatment[j] != t {
            continue;
        }
        let q = model.probabilities(data.covariates.row(j));
        let d: f64 = p.iter().zip(&q).map(|(a, b)| (a - b).powi(2)).sum();
        if d < best.0 || (d == best.0 && j < best.1) {
            best = (d, j);
        }
    }
    best.1
}

#[test]
fn batch_matching_adds_one_nearest_partner_per_other_treatment() {
    let data = common::small_news(6, 400);
    let (model, table) = propensity_table(&data);
    let batch: Vec<usize> = data.indices(Split::Train)[..8].to_vec();
    let augmented = table.match_batch(&batch);
    assert_eq!(augmented.len(), 16);
    assert_eq!(&augmented[..8], &batch[..]);
    for t in 0..2 {
        assert_eq!(augmented.iter().filter(|&&i| data.treatment[i] == t).count(), 8);
    }
    for (pos, &i) in batch.iter().enumerate() {
        let other = 1 - data.treatment[i];
        assert_eq!(augmented[8 + pos], brute_force_match(&data, &model, i, other));
    }
}

#[test]
fn dataset_matching_balances_treatments_with_close_partners() {
    let data = common::small_news(7, 400);
    let (model, table) = propensity_table(&data);
    let train = data.indices(Split::Train);
    let matched = table.match_dataset(train);
    for t in 0..2 {
        assert_eq!(matched.iter().filter(|&&i| data.treatment[i] == t).count(), train.len());
    }
    let p = |i: usize| model.probabilities(data.covariates.row(i));
    let dist = |i: usize, j: usize| p(i).iter().zip(p(j)).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
    let n = train.len();
    let matched_mean = (0..n).map(|pos| dist(matched[pos], matched[n + pos])).sum::<f64>() / n as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let random_mean = (0..n)
        .map(|pos| {
            let i = matched[pos];
            let others = data.treatment_group(Split::Train, 1 - data.treatment[i]);
            dist(i, others[rng.random_range(0..others.len())])
        })
        .sum::<f64>()
        / n as f64;
    assert!(matched_mean < random_mean, "{matched_mean} vs {random_mean}");
}
