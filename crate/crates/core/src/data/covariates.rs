//! Synthetic covariate substitutes for the benchmark corpora.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal, Poisson};

use super::spec::{BenchmarkKind, BenchmarkSpec};
use crate::nn::Matrix;
use crate::{Error, Result};

const DOC_TOPIC_ALPHA: f64 = 0.1;
const TOPIC_TERM_ALPHA: f64 = 0.05;
const MEAN_DOC_LENGTH: f64 = 100.0;
const MIXTURE_COMPONENTS: usize = 5;

/// Covariates plus the embedding `z(X)` used for similarity comparisons.
#[derive(Debug, Clone)]
pub struct Covariates {
    pub x: Matrix,
    pub embedding: Matrix,
}

pub fn generate_covariates<R: Rng + ?Sized>(spec: &BenchmarkSpec, rng: &mut R) -> Result<Covariates> {
    spec.validate()?;
    match spec.kind {
        BenchmarkKind::NewsLike => documents(spec, rng),
        BenchmarkKind::MvicuLike | BenchmarkKind::TcgaLike => {
            let x = gaussian_mixture(spec.num_samples, spec.num_features, rng)?;
            let embedding = standardize_columns(&x);
            Ok(Covariates { x, embedding })
        }
    }
}

fn dirichlet<R: Rng + ?Sized>(alpha: f64, dim: usize, rng: &mut R) -> Vec<f64> {
    let gamma = Gamma::new(alpha, 1.0).expect("positive shape");
    loop {
        let draws: Vec<f64> = (0..dim).map(|_| gamma.sample(rng)).collect();
        let total: f64 = draws.iter().sum();
        if total > 0.0 && total.is_finite() {
            return draws.into_iter().map(|g| g / total).collect();
        }
    }
}

/// Latent-topic documents: per-document topic mixtures from a symmetric
/// Dirichlet, term counts from the induced multinomial. The embedding is the
/// topic mixture itself.
fn documents<R: Rng + ?Sized>(spec: &BenchmarkSpec, rng: &mut R) -> Result<Covariates> {
    let (n, p, topics) = (spec.num_samples, spec.num_features, spec.num_topics);
    if p < topics {
        return Err(Error::InvalidConfig(format!(
            "{p} terms is fewer than {topics} topics"
        )));
    }
    let topic_terms: Vec<Vec<f64>> = (0..topics)
        .map(|_| dirichlet(TOPIC_TERM_ALPHA, p, rng))
        .collect();
    let length = Poisson::new(MEAN_DOC_LENGTH).expect("positive mean");
    let mut x = Matrix::zeros(n, p);
    let mut embedding = Matrix::zeros(n, topics);
    let mut term_probs = vec![0.0; p];
    let mut cumulative = vec![0.0; p];
    for i in 0..n {
        let theta = dirichlet(DOC_TOPIC_ALPHA, topics, rng);
        term_probs.iter_mut().for_each(|v| *v = 0.0);
        for (w, beta) in theta.iter().zip(&topic_terms) {
            for (tp, b) in term_probs.iter_mut().zip(beta) {
                *tp += w * b;
            }
        }
        let mut acc = 0.0;
        for (c, tp) in cumulative.iter_mut().zip(&term_probs) {
            acc += tp;
            *c = acc;
        }
        let words = (length.sample(rng) as usize).max(1);
        let row = x.row_mut(i);
        for _ in 0..words {
            let u = rng.random::<f64>() * acc;
            let term = cumulative.partition_point(|&c| c <= u).min(p - 1);
            row[term] += 1.0;
        }
        embedding.row_mut(i).copy_from_slice(&theta);
    }
    Ok(Covariates { x, embedding })
}

/// Continuous covariates from a Gaussian mixture with unit within-component
/// spread and standard-normal component means.
fn gaussian_mixture<R: Rng + ?Sized>(n: usize, p: usize, rng: &mut R) -> Result<Matrix> {
    let normal = Normal::new(0.0, 1.0).expect("valid normal");
    let centers: Vec<Vec<f64>> = (0..MIXTURE_COMPONENTS)
        .map(|_| (0..p).map(|_| normal.sample(rng)).collect())
        .collect();
    let mut x = Matrix::zeros(n, p);
    for i in 0..n {
        let c = &centers[rng.random_range(0..MIXTURE_COMPONENTS)];
        for (v, m) in x.row_mut(i).iter_mut().zip(c) {
            *v = m + normal.sample(rng);
        }
    }
    Ok(x)
}

/// Per-column z-scores over all rows; constant columns map to zero.
pub fn standardize_columns(x: &Matrix) -> Matrix {
    let (n, p) = (x.rows(), x.cols());
    let mut mean = vec![0.0; p];
    for i in 0..n {
        for (m, v) in mean.iter_mut().zip(x.row(i)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n.max(1) as f64);
    let mut var = vec![0.0; p];
    for i in 0..n {
        for ((s, v), m) in var.iter_mut().zip(x.row(i)).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let sd: Vec<f64> = var
        .iter()
        .map(|s| {
            let sd = (s / n.max(1) as f64).sqrt();
            if sd > 0.0 {
                sd
            } else {
                1.0
            }
        })
        .collect();
    let mut out = x.clone();
    for i in 0..n {
        for ((v, m), s) in out.row_mut(i).iter_mut().zip(&mean).zip(&sd) {
            *v = (*v - m) / s;
        }
    }
    out
}

/// Embedding for externally supplied covariates: term frequencies for
/// document-style benchmarks, column z-scores otherwise.
pub fn embed_external(kind: BenchmarkKind, x: &Matrix) -> Matrix {
    match kind {
        BenchmarkKind::NewsLike => {
            let mut out = x.clone();
            for i in 0..out.rows() {
                let row = out.row_mut(i);
                let total: f64 = row.iter().sum();
                if total > 0.0 {
                    row.iter_mut().for_each(|v| *v /= total);
                }
            }
            out
        }
        _ => standardize_columns(x),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::spec::Preset;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_news() -> BenchmarkSpec {
        let mut spec = BenchmarkSpec::news(2, Preset::Desk, 5);
        spec.num_samples = 200;
        spec
    }

    #[test]
    fn topic_mixtures_are_distributions() {
        let cov = generate_covariates(&small_news(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        for i in 0..cov.embedding.rows() {
            let row = cov.embedding.row(i);
            assert!(row.iter().all(|&v| v >= 0.0));
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn word_counts_are_nonnegative_integers() {
        let cov = generate_covariates(&small_news(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert!(cov.x.data().iter().all(|&v| v >= 0.0 && v.fract() == 0.0));
        assert!(cov.x.data().iter().sum::<f64>() > 0.0);
    }

    #[test]
    fn same_seed_same_covariates() {
        let spec = small_news();
        let a = generate_covariates(&spec, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = generate_covariates(&spec, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a.x, b.x);
        let mut spec = BenchmarkSpec::mvicu(Preset::Desk, 0);
        spec.num_samples = 50;
        let a = generate_covariates(&spec, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = generate_covariates(&spec, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a.x, b.x);
    }

    #[test]
    fn too_few_terms_rejected() {
        let mut spec = small_news();
        spec.num_features = 20;
        assert!(generate_covariates(&spec, &mut ChaCha8Rng::seed_from_u64(1)).is_err());
    }

    #[test]
    fn standardized_columns_have_unit_spread() {
        let mut spec = BenchmarkSpec::mvicu(Preset::Desk, 0);
        spec.num_samples = 300;
        let cov = generate_covariates(&spec, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let z = &cov.embedding;
        for j in 0..z.cols() {
            let col: Vec<f64> = (0..z.rows()).map(|i| z.get(i, j)).collect();
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / col.len() as f64;
            assert!(mean.abs() < 1e-9 && (var - 1.0).abs() < 1e-9);
        }
    }
}
