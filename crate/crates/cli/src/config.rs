//! TOML run configuration.
//!
//! ```toml
//! seed = 7
//! output_dir = "runs/demo"
//!
//! [data.synth]
//! counts = [[60, 60], [60, 60], [60, 60], [60, 60]]
//! payload = { kind = "embeddings", layers = 4, frames = 20, dims = 16 }
//! separation = 2.0
//! gender_leakage = 1.0
//! speakers_per_gender = 10
//!
//! [folds]
//! scheme = "speaker-fraction-fold"
//! k = 5
//!
//! [train]
//! max_epochs = 30
//!
//! [attack]
//! kind = "fgsm"
//! snr_db = 45.0
//! ```
//!
//! Every section is optional except that `data` must name a manifest or a
//! synthetic spec. The top-level `seed` overrides any `seed` inside the
//! `train` and `attack` sections.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use trustprobe::attacks::AttackConfig;
use trustprobe::dataio::{counts_from_emotion_totals, FoldScheme, Payload, SynthSpec, ValPolicy};
use trustprobe::model::{ToyEncoderConfig, DEFAULT_FC_HIDDEN};
use trustprobe::profile::AxisSpec;
use trustprobe::training::TrainConfig;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub folds: FoldSection,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub attack: AttackConfig,
    #[serde(default)]
    pub profile: ProfileSection,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// Existing manifest, relative to the config file.
    pub manifest: Option<PathBuf>,
    pub synth: Option<SynthSection>,
}

/// [`SynthSpec`] without the seed. Give either `counts` (`[emotion][gender]`)
/// or per-emotion `emotion_totals` split evenly across genders.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSection {
    #[serde(default = "default_dataset_name")]
    pub dataset_name: String,
    pub counts: Option<[[usize; 2]; 4]>,
    pub emotion_totals: Option<[usize; 4]>,
    pub payload: Payload,
    pub separation: f64,
    #[serde(default)]
    pub gender_leakage: f64,
    pub speakers_per_gender: usize,
    #[serde(default)]
    pub sessions: Option<usize>,
}

fn default_dataset_name() -> String {
    "synth".into()
}

impl SynthSection {
    pub fn to_spec(&self, seed: u64) -> Result<SynthSpec, CliError> {
        let counts = match (self.counts, self.emotion_totals) {
            (Some(c), None) => c,
            (None, Some(t)) => counts_from_emotion_totals(t),
            _ => return Err(CliError::Config("data.synth needs exactly one of counts and emotion_totals".into())),
        };
        Ok(SynthSpec {
            dataset_name: self.dataset_name.clone(),
            counts,
            payload: self.payload,
            separation: self.separation,
            gender_leakage: self.gender_leakage,
            speakers_per_gender: self.speakers_per_gender,
            sessions: self.sessions,
            seed,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    /// Name used in reports and profiles.
    pub name: String,
    pub fc_hidden: usize,
    /// Toy encoder for waveform data; its seed is the run seed.
    pub encoder: Option<EncoderSection>,
    /// Externally measured backbone operation count for FLOPs reporting.
    pub backbone_flops: Option<u64>,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            name: "model".into(),
            fc_hidden: DEFAULT_FC_HIDDEN,
            encoder: None,
            backbone_flops: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderSection {
    pub layers: usize,
    pub dim: usize,
}

impl EncoderSection {
    pub fn config(&self, seed: u64) -> ToyEncoderConfig {
        ToyEncoderConfig {
            layers: self.layers,
            dim: self.dim,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FoldSection {
    pub scheme: FoldScheme,
    pub k: usize,
    pub val_policy: Option<ValPolicy>,
}

impl Default for FoldSection {
    fn default() -> Self {
        Self {
            scheme: FoldScheme::SpeakerFractionFold,
            k: 5,
            val_policy: None,
        }
    }
}

impl FoldSection {
    /// One validation session under session folds, a speaker fraction otherwise.
    pub fn val_policy(&self) -> ValPolicy {
        self.val_policy.unwrap_or(match self.scheme {
            FoldScheme::SessionFold => ValPolicy::OneSession,
            FoldScheme::SpeakerFractionFold => ValPolicy::Fraction,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSection {
    /// Replaces the default spec of each listed axis.
    #[serde(default)]
    pub axes: Vec<AxisSpec>,
    pub title: Option<String>,
}

impl ProfileSection {
    pub fn specs(&self) -> Vec<AxisSpec> {
        AxisSpec::defaults()
            .into_iter()
            .map(|d| self.axes.iter().find(|o| o.axis == d.axis).copied().unwrap_or(d))
            .collect()
    }
}

/// A parsed configuration together with the text it came from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub text: String,
    /// Directory relative paths in the config resolve against.
    pub base_dir: PathBuf,
}

pub fn parse_config(text: &str, base_dir: &Path) -> Result<LoadedConfig, CliError> {
    let config: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.message().to_string() + &span_note(text, e.span())))?;
    let loaded = LoadedConfig {
        config,
        text: text.to_string(),
        base_dir: base_dir.to_path_buf(),
    };
    loaded.config.validate()?;
    Ok(loaded)
}

fn span_note(text: &str, span: Option<std::ops::Range<usize>>) -> String {
    match span {
        Some(r) => format!(" (line {})", text[..r.start.min(text.len())].matches('\n').count() + 1),
        None => String::new(),
    }
}

pub fn load_config(path: &Path) -> Result<LoadedConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_config(&text, &base)
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.data.manifest.is_some() && self.data.synth.is_some() {
            return Err(CliError::Config("data.manifest and data.synth are mutually exclusive".into()));
        }
        if self.folds.k == 0 {
            return Err(CliError::Config("folds.k must be at least 1".into()));
        }
        if self.model.fc_hidden == 0 {
            return Err(CliError::Config("model.fc_hidden must be positive".into()));
        }
        self.train.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.attack.validate().map_err(|e| CliError::Config(e.to_string()))?;
        for spec in &self.profile.axes {
            spec.validate().map_err(|e| CliError::Config(e.to_string()))?;
        }
        Ok(())
    }
}
