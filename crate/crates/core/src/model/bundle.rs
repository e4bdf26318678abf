//! On-disk head bundle: an index file naming each tensor and its shape, and
//! one tensor file per parameter.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::head::{HeadConfig, HeadParams};
use crate::dataio::{read_tensor, write_tensor, DataError};
use crate::error::{Error, Result};

pub const BUNDLE_INDEX: &str = "index.json";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BundleIndex {
    config: HeadConfig,
    tensors: Vec<IndexEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IndexEntry {
    name: String,
    file: String,
    shape: Vec<usize>,
}

pub fn save_head(dir: impl AsRef<Path>, params: &HeadParams<f32>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| DataError::io(dir, e))?;
    let mut tensors = Vec::with_capacity(9);
    for (name, t) in HeadParams::<f32>::NAMES.iter().zip(params.tensors()) {
        let file = format!("{name}.tsrb");
        write_tensor(dir.join(&file), t)?;
        tensors.push(IndexEntry {
            name: name.to_string(),
            file,
            shape: t.shape().to_vec(),
        });
    }
    let index = BundleIndex {
        config: params.config,
        tensors,
    };
    let path = dir.join(BUNDLE_INDEX);
    let text = serde_json::to_string_pretty(&index)?;
    fs::write(&path, text).map_err(|e| DataError::io(&path, e))?;
    Ok(())
}

pub fn load_head(dir: impl AsRef<Path>) -> Result<HeadParams<f32>> {
    let dir = dir.as_ref();
    let path = dir.join(BUNDLE_INDEX);
    let text = fs::read_to_string(&path).map_err(|e| DataError::io(&path, e))?;
    let index: BundleIndex = serde_json::from_str(&text)?;
    let mut tensors = Vec::with_capacity(index.tensors.len());
    for (entry, want) in index.tensors.iter().zip(HeadParams::<f32>::NAMES) {
        if entry.name != want {
            return Err(Error::Config(format!("bundle lists {} where {want} was expected", entry.name)));
        }
        let t = read_tensor(dir.join(&entry.file))?;
        if t.shape() != entry.shape.as_slice() {
            return Err(Error::Shape {
                expected: format!("{} {:?}", entry.name, entry.shape),
                got: t.shape().to_vec(),
            });
        }
        tensors.push(t);
    }
    HeadParams::from_tensors(index.config, tensors)
}
