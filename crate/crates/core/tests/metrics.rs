mod common;

use drnet::data::{Dataset, Split};
use drnet::metrics::{
    dpe, evaluate, integration_nodes, mise, nn_mise, optimal_dosage, pe, romberg, Curve, NnMiseReference, Predictor,
    Unit, INTEGRATION_INTERVALS,
};
use drnet::model::DosageRange;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Predictor defined by a closure over `(unit index, treatment, dosage)`.
struct FnPredictor<F>(F);

impl<F: Fn(usize, usize, f64) -> f64 + Sync> Predictor for FnPredictor<F> {
    fn curve<'a>(&'a self, unit: Unit<'a>, t: usize) -> drnet::Result<Curve<'a>> {
        let n = unit.index;
        Ok(Box::new(move |s| (self.0)(n, t, s)))
    }
}

/// Standard normal draw keyed by `(n, t, s)`, so curves stay functions of s.
fn keyed_noise(n: usize, t: usize, s: f64) -> f64 {
    let key = (n as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ ((t as u64) << 56) ^ s.to_bits();
    StandardNormal.sample(&mut ChaCha8Rng::seed_from_u64(key))
}

fn dense_grid(range: DosageRange, points: usize) -> impl Iterator<Item = f64> {
    (0..points).map(move |i| range.min + range.width() * i as f64 / (points - 1) as f64)
}

#[test]
fn romberg_is_exact_on_low_degree_polynomials() {
    let coefficients = [[1.0, 0.0, 0.0, 0.0, 0.0, 0.0], [0.5, -2.0, 3.0, 0.25, -1.5, 6.0], [0.0, 0.0, 0.0, 0.0, 0.0, 1.0]];
    for c in coefficients {
        let f = |s: f64| c.iter().enumerate().map(|(i, ci)| ci * s.powi(i as i32)).sum::<f64>();
        let exact: f64 = c.iter().enumerate().map(|(i, ci)| ci / (i + 1) as f64).sum();
        assert!((romberg(f, 0.0, 1.0, INTEGRATION_INTERVALS).unwrap() - exact).abs() <= 1e-12);
    }
    let e = romberg(f64::exp, 0.0, 1.0, INTEGRATION_INTERVALS).unwrap();
    assert!((e - (std::f64::consts::E - 1.0)).abs() <= 1e-10);
}

#[test]
fn optimal_dosage_prefers_the_major_mixture_peak() {
    let bump = |s: f64, m: f64| (-(s - m).powi(2) / (2.0 * 0.05f64.powi(2))).exp();
    let curve = |s: f64| 0.9 * bump(s, 0.2) + 0.1 * bump(s, 0.8);
    let grid_best = dense_grid(DosageRange::new(0.0, 1.0).unwrap(), 10_000)
        .max_by(|a, b| curve(*a).total_cmp(&curve(*b)))
        .unwrap();
    let (s, v) = optimal_dosage(curve, DosageRange::new(0.0, 1.0).unwrap()).unwrap();
    assert!((s - grid_best).abs() < 2e-4, "{s} vs {grid_best}");
    assert!(v >= curve(grid_best));
}

#[test]
fn oracle_scores_zero_on_every_metric() {
    let data = common::small_news(1, 400);
    for split in [Split::Validation, Split::Test] {
        assert!(mise(&data.oracle, &data, split).unwrap() <= 1e-9);
        assert!(dpe(&data.oracle, &data, split).unwrap() <= 1e-9);
        assert!(pe(&data.oracle, &data, split).unwrap() <= 1e-9);
    }
}

#[test]
fn constant_offset_integrates_to_offset_squared_times_width() {
    let data = common::small_mvicu(2, 300);
    for c in [0.5, -2.0, 7.0] {
        let shifted = FnPredictor(|n, t, s| data.oracle.evaluate_unchecked(n, t, s) + c);
        let value = mise(&shifted, &data, Split::Test).unwrap();
        let expected = c * c * DosageRange::UNIT.width();
        assert!((value - expected).abs() <= 1e-9 * expected, "{value} vs {expected}");
        // Shifting every curve keeps every argmax.
        assert!(dpe(&shifted, &data, Split::Test).unwrap() <= 1e-9);
    }
}

#[test]
fn reflected_model_pays_the_gap_between_mirrored_dosages() {
    let data = common::small_news(3, 300);
    let oracle = &data.oracle;
    let range = DosageRange::UNIT;
    let mirror = |s: f64| range.min + range.max - s;
    let reflected = FnPredictor(|n, t, s| oracle.evaluate_unchecked(n, t, mirror(s)));
    let mut expected = 0.0;
    let mut count = 0;
    for &n in data.indices(Split::Test) {
        for t in 0..data.num_treatments() {
            let y = |s: f64| oracle.evaluate_unchecked(n, t, s);
            let best = dense_grid(range, 20_001).max_by(|a, b| y(*a).total_cmp(&y(*b))).unwrap();
            expected += (y(best) - y(mirror(best))).powi(2);
            count += 1;
        }
    }
    expected /= count as f64;
    let value = dpe(&reflected, &data, Split::Test).unwrap();
    assert!(expected > 1.0);
    assert!((value - expected).abs() <= 1e-3 * expected, "{value} vs {expected}");
}

#[test]
fn adversarial_treatment_choice_costs_the_best_outcome_gap() {
    let data = common::small_news(4, 300);
    assert_eq!(data.num_treatments(), 2);
    let oracle = &data.oracle;
    let range = DosageRange::UNIT;
    let peak = |n: usize, t: usize| {
        dense_grid(range, 20_001)
            .map(|s| oracle.evaluate_unchecked(n, t, s))
            .fold(f64::NEG_INFINITY, f64::max)
    };
    // Flat curves that always rank the worse treatment first; flat curves
    // resolve their dosage to the lowest grid point.
    let peaks: Vec<[f64; 2]> = (0..data.len())
        .map(|n| if data.indices(Split::Test).contains(&n) { [peak(n, 0), peak(n, 1)] } else { [0.0; 2] })
        .collect();
    let adversary = FnPredictor(|n: usize, t: usize, _s: f64| if peaks[n][t] < peaks[n][1 - t] { 1.0 } else { 0.0 });
    let mut expected = 0.0;
    for &n in data.indices(Split::Test) {
        let [p0, p1] = peaks[n];
        let worst = if p0 < p1 { 0 } else { 1 };
        expected += (p0.max(p1) - oracle.evaluate_unchecked(n, worst, range.min)).powi(2);
    }
    expected /= data.indices(Split::Test).len() as f64;
    let value = pe(&adversary, &data, Split::Test).unwrap();
    assert!((value - expected).abs() <= 1e-6 * expected, "{value} vs {expected}");
}

#[test]
fn noise_degrades_mise_monotonically() {
    let data = common::small_mvicu(5, 300);
    let mut last = 0.0;
    for sigma in [0.5, 1.0, 2.0] {
        let noisy = FnPredictor(|n, t, s| data.oracle.evaluate_unchecked(n, t, s) + sigma * keyed_noise(n, t, s));
        let value = mise(&noisy, &data, Split::Test).unwrap();
        assert!(value > last, "sigma {sigma}: {value} <= {last}");
        last = value;
    }
}

#[test]
fn dosage_policy_error_is_bounded_by_the_curve_range() {
    let data = common::small_news(6, 300);
    let oracle = &data.oracle;
    let mut bound = 0.0;
    let mut count = 0;
    for &n in data.indices(Split::Test) {
        for t in 0..data.num_treatments() {
            let values: Vec<f64> = dense_grid(DosageRange::UNIT, 10_001).map(|s| oracle.evaluate_unchecked(n, t, s)).collect();
            let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
            bound += (hi - lo).powi(2);
            count += 1;
        }
    }
    bound /= count as f64;
    let noisy = FnPredictor(|n, t, s| oracle.evaluate_unchecked(n, t, s) + 20.0 * keyed_noise(n, t, s));
    let anti = FnPredictor(|n, t, s| -oracle.evaluate_unchecked(n, t, s));
    for p in [&noisy as &dyn Predictor, &anti] {
        assert!(dpe(p, &data, Split::Test).unwrap() <= bound * (1.0 + 1e-6));
    }
}

#[test]
fn policy_metrics_only_see_the_argmax() {
    let data = common::small_news(7, 300);
    let oracle = &data.oracle;
    let base = |n: usize, t: usize, s: f64| oracle.evaluate_unchecked(n, t, s) + 5.0 * keyed_noise(n, t, s);
    let model = FnPredictor(base);
    // Power-of-two scaling is exact, so every comparison is preserved.
    let scaled = FnPredictor(|n, t, s| 4.0 * base(n, t, s));
    assert_eq!(pe(&model, &data, Split::Test).unwrap(), pe(&scaled, &data, Split::Test).unwrap());
    assert_eq!(dpe(&model, &data, Split::Test).unwrap(), dpe(&scaled, &data, Split::Test).unwrap());
    // A strictly increasing nonlinear transform keeps each dosage argmax.
    let warped = FnPredictor(|n, t, s| base(n, t, s).powi(3) + base(n, t, s));
    let a = dpe(&model, &data, Split::Test).unwrap();
    let b = dpe(&warped, &data, Split::Test).unwrap();
    assert!((a - b).abs() <= 1e-9 * a.max(1.0), "{a} vs {b}");
}

#[test]
fn nn_mise_uses_an_exact_duplicate_as_its_stand_in() {
    let mut data: Dataset = common::small_news(8, 300);
    let v = data.indices(Split::Validation)[0];
    let t = 1;
    let u = data.treatment_group(Split::Train, t)[0];
    let node = 17;
    let s = integration_nodes(DosageRange::UNIT.min, DosageRange::UNIT.max, INTEGRATION_INTERVALS)[node];
    let row = data.covariates.row(v).to_vec();
    data.covariates.row_mut(u).copy_from_slice(&row);
    data.dosage[u] = s;
    data.outcome[u] = 123.25;
    let reference = NnMiseReference::new(&data, 5).unwrap();
    assert_eq!(reference.units()[0], v);
    assert_eq!(reference.targets(0, t)[node], 123.25);
}

#[test]
fn nn_mise_ranks_models_like_true_mise() {
    let data = common::small_news(9, 600);
    let oracle = &data.oracle;
    let mean = data.indices(Split::Train).iter().map(|&i| data.outcome[i]).sum::<f64>()
        / data.indices(Split::Train).len() as f64;
    let clone = FnPredictor(|n, t, s| oracle.evaluate_unchecked(n, t, s));
    let noisy = FnPredictor(|n, t, s| oracle.evaluate_unchecked(n, t, s) + 4.0 * keyed_noise(n, t, s));
    let constant = FnPredictor(|_, _, _| mean);
    let reference = NnMiseReference::new(&data, 5).unwrap();
    let models: [&dyn Predictor; 3] = [&clone, &noisy, &constant];
    let approx: Vec<f64> = models.iter().map(|m| nn_mise(*m, &data, &reference).unwrap()).collect();
    let exact: Vec<f64> = models.iter().map(|m| mise(*m, &data, Split::Validation).unwrap()).collect();
    assert!(approx.iter().all(|&v| v >= 0.0));
    assert!(exact[0] < exact[1] && exact[1] < exact[2], "{exact:?}");
    assert!(approx[0] < approx[1] && approx[1] < approx[2], "{approx:?}");
}

#[test]
fn report_square_roots_match_the_raw_metrics() {
    let data = common::small_mvicu(10, 300);
    let noisy = FnPredictor(|n, t, s| data.oracle.evaluate_unchecked(n, t, s) + keyed_noise(n, t, s));
    let report = evaluate(&noisy, &data, Split::Test, "noisy", 3).unwrap();
    assert_eq!(report.root_mise, mise(&noisy, &data, Split::Test).unwrap().sqrt());
    assert_eq!(report.root_dpe, dpe(&noisy, &data, Split::Test).unwrap().sqrt());
    assert_eq!(report.root_pe, pe(&noisy, &data, Split::Test).unwrap().sqrt());
    assert_eq!(report.integration_samples, INTEGRATION_INTERVALS + 1);
    let json = serde_json::to_string(&report).unwrap();
    assert_eq!(serde_json::from_str::<drnet::metrics::MetricsReport>(&json).unwrap(), report);
}
