#![allow(dead_code)]

use drnet::data::{BenchmarkSpec, Dataset, Preset};

/// Small NewsLike dataset for quick end-to-end checks.
pub fn small_news(seed: u64, samples: usize) -> Dataset {
    let spec = BenchmarkSpec {
        num_samples: samples,
        num_features: 60,
        ..BenchmarkSpec::news(2, Preset::Desk, seed)
    };
    Dataset::generate(&spec).unwrap()
}

pub fn small_mvicu(seed: u64, samples: usize) -> Dataset {
    let spec = BenchmarkSpec {
        num_samples: samples,
        ..BenchmarkSpec::mvicu(Preset::Desk, seed)
    };
    Dataset::generate(&spec).unwrap()
}

/// `|a − b| / max(|a|, |b|, floor)`.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}
