//! Versioned weight container.
//!
//! One JSON document per model stage: a config header plus every parameter
//! with name, shape, freeze flag and raw data. Serialization is byte-stable:
//! loading an archive and saving it again reproduces the file exactly, which
//! is what the freeze contracts compare against.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::param::Parameter;

pub const ARCHIVE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightArchive {
    pub schema_version: u32,
    /// Stage-specific configuration, stored verbatim.
    pub config: serde_json::Value,
    pub params: Vec<Parameter>,
}

impl WeightArchive {
    pub fn new(config: serde_json::Value, params: Vec<Parameter>) -> Self {
        WeightArchive {
            schema_version: ARCHIVE_SCHEMA_VERSION,
            config,
            params,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        serde_json::to_vec(self).map_err(|e| Error::json("weight archive", e))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let archive: WeightArchive =
            serde_json::from_slice(bytes).map_err(|e| Error::json("weight archive", e))?;
        if archive.schema_version != ARCHIVE_SCHEMA_VERSION {
            return Err(Error::validation(format!(
                "unsupported archive schema version {}",
                archive.schema_version
            )));
        }
        Ok(archive)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::from_bytes(&bytes)
    }

    pub fn find(&self, name: &str) -> Result<&Parameter> {
        self.params
            .iter()
            .find(|p| p.name == name)
            .ok_or_else(|| Error::validation(format!("archive has no parameter named {name}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::tensor::Tensor;

    #[test]
    fn save_load_save_is_byte_stable() {
        let params = vec![
            Parameter::trainable("a", Tensor::matrix(2, 3, vec![0.1, -0.2, 1.0 / 3.0, 4.0, 5e-12, 6.0]).unwrap()),
            Parameter::frozen("b", Tensor::vector(vec![-0.0, 1.25])),
        ];
        let archive = WeightArchive::new(serde_json::json!({"dim": 3}), params);
        let bytes = archive.to_bytes().unwrap();
        let reloaded = WeightArchive::from_bytes(&bytes).unwrap();
        assert_eq!(reloaded.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn unknown_schema_version_is_rejected() {
        let mut archive = WeightArchive::new(serde_json::Value::Null, vec![]);
        archive.schema_version = 99;
        let bytes = serde_json::to_vec(&archive).unwrap();
        assert!(WeightArchive::from_bytes(&bytes).is_err());
    }
}
