use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DrNetConfig, ModelKind, NeuralModel};
use crate::data::{OutcomeScale, Standardizer};
use crate::{Error, Result};

pub const MODEL_FORMAT: &str = "drnet-model";
pub const MODEL_VERSION: u32 = 1;

/// On-disk model layout. `parameters` holds every tensor as a flat row-major
/// array in [`NeuralModel::tensors`] order: for each stack, each layer's
/// weights (`out × in`) followed by its bias.
#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    kind: ModelKind,
    config: DrNetConfig,
    normalizer: Standardizer,
    outcome_scale: OutcomeScale,
    parameters: Vec<Vec<f64>>,
}

impl NeuralModel {
    fn to_file(&self) -> ModelFile {
        ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            kind: self.kind(),
            config: self.config().clone(),
            normalizer: self.normalizer().clone(),
            outcome_scale: self.outcome_scale(),
            parameters: self.tensors().into_iter().map(<[f64]>::to_vec).collect(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_file())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_file(serde_json::from_str(text)?)
    }

    fn from_file(file: ModelFile) -> Result<Self> {
        if file.format != MODEL_FORMAT {
            return Err(Error::InvalidConfig(format!(
                "expected a `{MODEL_FORMAT}` file, found format `{}`",
                file.format
            )));
        }
        if file.version != MODEL_VERSION {
            return Err(Error::FormatVersion {
                kind: "model",
                found: file.version,
                expected: MODEL_VERSION,
            });
        }
        // Initial values are overwritten below; the seed is irrelevant.
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut model = NeuralModel::new(
            file.kind,
            file.config,
            file.normalizer,
            file.outcome_scale,
            &mut rng,
        )?;
        let mut tensors = model.tensors_mut();
        if tensors.len() != file.parameters.len() {
            return Err(Error::DimensionMismatch {
                context: "stored parameter tensors",
                expected: tensors.len(),
                actual: file.parameters.len(),
            });
        }
        for (dst, src) in tensors.iter_mut().zip(&file.parameters) {
            if dst.len() != src.len() {
                return Err(Error::DimensionMismatch {
                    context: "stored tensor length",
                    expected: dst.len(),
                    actual: src.len(),
                });
            }
            dst.copy_from_slice(src);
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer(BufWriter::new(file), &self.to_file())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_file(serde_json::from_reader(BufReader::new(file))?)
    }
}
