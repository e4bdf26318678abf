//! Versioned JSON record of a profile comparison.

use serde::{Deserialize, Serialize};

use super::{AxisSpec, NormalizedProfile, TrustProfile};
use crate::error::{Error, Result};
use crate::ENGINE_VERSION;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileEntry {
    pub raw: TrustProfile,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileDocument {
    pub schema_version: u32,
    pub engine_version: String,
    pub axes: Vec<AxisSpec>,
    pub models: Vec<ProfileEntry>,
}

/// Pretty-printed document pairing each raw profile with its scores.
pub fn emit_json(profiles: &[TrustProfile], specs: &[AxisSpec], normalized: &[NormalizedProfile]) -> Result<String> {
    if profiles.len() != normalized.len() {
        return Err(Error::AxisSpec(format!(
            "{} profiles but {} score rows",
            profiles.len(),
            normalized.len()
        )));
    }
    let doc = ProfileDocument {
        schema_version: SCHEMA_VERSION,
        engine_version: ENGINE_VERSION.to_string(),
        axes: specs.to_vec(),
        models: profiles
            .iter()
            .zip(normalized)
            .map(|(p, n)| ProfileEntry {
                raw: p.clone(),
                scores: n.scores.clone(),
            })
            .collect(),
    };
    Ok(serde_json::to_string_pretty(&doc)? + "\n")
}

pub fn load_profile_document(text: &str) -> Result<ProfileDocument> {
    let doc: ProfileDocument = serde_json::from_str(text)?;
    if doc.schema_version != SCHEMA_VERSION {
        return Err(Error::AxisSpec(format!("unsupported profile schema {}", doc.schema_version)));
    }
    Ok(doc)
}
