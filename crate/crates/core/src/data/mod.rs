//! Semi-synthetic benchmarks with a retained ground-truth oracle.
//!
//! The outcome and assignment processes follow the document (News-style),
//! ventilator (MVICU-style) and expression (TCGA-style) benchmarks. The real
//! corpora are replaced by generative stand-ins: Dirichlet-multinomial
//! documents over latent topics, and Gaussian-mixture continuous covariates.
//! Real covariates can be supplied through CSV instead.
//!
//! The generating process satisfies unconfoundedness by construction:
//! assignment depends only on quantities fixed per unit before treatment, and
//! every treatment has positive assignment probability for every unit.

mod covariates;
mod csv_io;
mod dataset;
mod oracle;
mod spec;
mod standardize;

pub use covariates::{embed_external, generate_covariates, standardize_columns, Covariates};
pub use csv_io::{load_csv_covariates, read_csv_covariates, write_csv_covariates, CsvSchema};
pub use dataset::{
    assign_treatments_and_dosages, assignment_probabilities, sample_treatment, Dataset, Factuals,
    Split, Splits, stream_rng,
};
pub use oracle::{build_oracle, GaussianParams, GroundTruthOracle};
pub use standardize::{OutcomeScale, Standardizer};
pub use spec::{BenchmarkKind, BenchmarkSpec, DistanceMetric, DosageLaw, ExpParameter, Preset};
