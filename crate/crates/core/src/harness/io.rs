use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::{ExperimentConfig, ExperimentResult};
use crate::{Error, Result};

/// Reads an experiment configuration from JSON, or TOML when the file
/// extension is `.toml`.
pub fn load_experiment_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    load_config(path)
}

/// Reads any configuration value from JSON, or TOML for `.toml` files.
pub fn load_config<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml")) {
        toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))
    } else {
        serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Writes `rows` as CSV with a header derived from their fields.
pub fn write_csv<T: Serialize>(path: impl AsRef<Path>, rows: &[T]) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut writer = csv::Writer::from_path(path)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// `runs/<model>-r<repeat>-h<run>.json` per run plus `summary.csv`.
pub(super) fn write_experiment(dir: &Path, result: &ExperimentResult) -> Result<()> {
    let runs = dir.join("runs");
    fs::create_dir_all(&runs).map_err(|e| Error::io(&runs, e))?;
    for r in &result.records {
        let path = runs.join(format!("{}-r{}-h{}.json", r.model, r.repeat, r.run));
        let text = serde_json::to_string_pretty(r)?;
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    }
    write_csv(dir.join("summary.csv"), &result.summary)
}
