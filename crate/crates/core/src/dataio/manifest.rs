//! Newline-delimited manifest of utterances.
//!
//! One JSON object per line:
//!
//! ```text
//! {"id":"utt_00001","tensor_path":"tensors/utt_00001.tsrb","emotion":"sad",
//!  "speaker_id":"F01","gender":"female","session_id":"S1","duration_s":2.1}
//! ```
//!
//! `emotion` is one of `neutral`, `happy`, `sad`, `angry`; `gender` is
//! `female` or `male`; `session_id` may be omitted. Blank lines are ignored.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::DataError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Emotion {
    Neutral,
    Happy,
    Sad,
    Angry,
}

impl Emotion {
    pub const ALL: [Emotion; 4] = [Emotion::Neutral, Emotion::Happy, Emotion::Sad, Emotion::Angry];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn token(self) -> &'static str {
        match self {
            Emotion::Neutral => "neutral",
            Emotion::Happy => "happy",
            Emotion::Sad => "sad",
            Emotion::Angry => "angry",
        }
    }

    pub fn from_token(token: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.token() == token)
    }
}

impl fmt::Display for Emotion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Female,
    Male,
}

impl Gender {
    pub const ALL: [Gender; 2] = [Gender::Female, Gender::Male];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn token(self) -> &'static str {
        match self {
            Gender::Female => "female",
            Gender::Male => "male",
        }
    }

    pub fn from_token(token: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|g| g.token() == token)
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UtteranceRecord {
    pub id: String,
    pub tensor_path: String,
    pub emotion: Emotion,
    pub speaker_id: String,
    pub gender: Gender,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub session_id: Option<String>,
    pub duration_s: f64,
}

/// Wire form, with enum tokens left as strings so they can be reported by line.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    id: String,
    tensor_path: String,
    emotion: String,
    speaker_id: String,
    gender: String,
    #[serde(default)]
    session_id: Option<String>,
    duration_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub dataset_name: String,
    pub records: Vec<UtteranceRecord>,
    /// Directory that `tensor_path`s are relative to.
    pub base_dir: PathBuf,
}

impl Manifest {
    pub fn new(dataset_name: impl Into<String>, records: Vec<UtteranceRecord>, base_dir: impl Into<PathBuf>) -> Self {
        Self {
            dataset_name: dataset_name.into(),
            records,
            base_dir: base_dir.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn resolve(&self, record: &UtteranceRecord) -> PathBuf {
        self.base_dir.join(&record.tensor_path)
    }

    /// Map from id to position in `records`.
    pub fn index(&self) -> HashMap<&str, usize> {
        self.records.iter().enumerate().map(|(i, r)| (r.id.as_str(), i)).collect()
    }

    pub fn get(&self, id: &str) -> Option<&UtteranceRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    /// Distinct speakers in first-appearance order.
    pub fn speakers(&self) -> Vec<&str> {
        let mut seen = std::collections::HashSet::new();
        self.records
            .iter()
            .filter(|r| seen.insert(r.speaker_id.as_str()))
            .map(|r| r.speaker_id.as_str())
            .collect()
    }

    /// Errors unless each gender has at least two speakers.
    pub fn require_gender_coverage(&self) -> Result<(), DataError> {
        for g in Gender::ALL {
            let mut speakers: Vec<&str> = self
                .records
                .iter()
                .filter(|r| r.gender == g)
                .map(|r| r.speaker_id.as_str())
                .collect();
            speakers.sort_unstable();
            speakers.dedup();
            if speakers.len() < 2 {
                return Err(DataError::Manifest {
                    line: 0,
                    message: format!("{g} has {} speaker(s); at least 2 are required", speakers.len()),
                });
            }
        }
        Ok(())
    }
}

/// Parses manifest text without touching the filesystem.
pub fn parse_manifest(text: &str, dataset_name: &str, base_dir: &Path) -> Result<Manifest, DataError> {
    let mut records = Vec::new();
    let mut lines_of: HashMap<String, usize> = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(line).map_err(|e| DataError::Manifest {
            line: line_no,
            message: e.to_string(),
        })?;
        let emotion = Emotion::from_token(&raw.emotion).ok_or_else(|| DataError::UnknownToken {
            line: line_no,
            field: "emotion",
            token: raw.emotion.clone(),
        })?;
        let gender = Gender::from_token(&raw.gender).ok_or_else(|| DataError::UnknownToken {
            line: line_no,
            field: "gender",
            token: raw.gender.clone(),
        })?;
        if !(raw.duration_s > 0.0 && raw.duration_s.is_finite()) {
            return Err(DataError::Manifest {
                line: line_no,
                message: format!("duration_s must be positive, got {}", raw.duration_s),
            });
        }
        if let Some(&first) = lines_of.get(&raw.id) {
            return Err(DataError::DuplicateId {
                id: raw.id,
                first,
                second: line_no,
            });
        }
        lines_of.insert(raw.id.clone(), line_no);
        records.push(UtteranceRecord {
            id: raw.id,
            tensor_path: raw.tensor_path,
            emotion,
            speaker_id: raw.speaker_id,
            gender,
            session_id: raw.session_id,
            duration_s: raw.duration_s,
        });
    }
    Ok(Manifest::new(dataset_name, records, base_dir))
}

/// Reads and validates a manifest, checking every tensor path exists.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Manifest, DataError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let manifest = parse_manifest(&text, &name, &base)?;
    let mut line_no = 0;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    for record in &manifest.records {
        if let Some((i, _)) = lines.next() {
            line_no = i + 1;
        }
        let resolved = manifest.resolve(record);
        if !resolved.is_file() {
            return Err(DataError::MissingTensor {
                line: line_no,
                path: resolved,
            });
        }
    }
    Ok(manifest)
}

pub fn write_manifest(path: impl AsRef<Path>, manifest: &Manifest) -> Result<(), DataError> {
    let path = path.as_ref();
    let mut text = String::new();
    for r in &manifest.records {
        text.push_str(&serde_json::to_string(r).expect("records serialize"));
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| DataError::io(path, e))
}
