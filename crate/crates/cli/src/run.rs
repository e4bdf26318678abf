//! Output-directory layout, provenance files and corpus loading.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::Serialize;
use trustprobe::dataio::{load_manifest, read_tensor, Manifest};
use trustprobe::model::{HeadConfig, ToyEncoder};
use trustprobe::Tensor;

use crate::config::{LoadedConfig, RunConfig};
use crate::error::CliError;

pub const CONFIG_ECHO: &str = "config.toml";
/// The only artifact that differs between identical runs.
pub const RUN_META: &str = "run_meta.json";

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub folds: Option<usize>,
}

/// A resolved invocation: effective configuration plus output directory.
#[derive(Debug, Clone)]
pub struct Run {
    pub config: RunConfig,
    config_text: Option<String>,
    base_dir: PathBuf,
    pub out: PathBuf,
}

impl Run {
    pub fn new(loaded: Option<LoadedConfig>, overrides: &Overrides) -> Result<Self, CliError> {
        let (mut config, config_text, base_dir) = match loaded {
            Some(l) => (l.config, Some(l.text), l.base_dir),
            None => (crate::config::parse_config("", Path::new("."))?.config, None, PathBuf::from(".")),
        };
        if let Some(seed) = overrides.seed {
            config.seed = seed;
        }
        if let Some(k) = overrides.folds {
            if k == 0 {
                return Err(CliError::Usage("--folds must be at least 1".into()));
            }
            config.folds.k = k;
        }
        config.train.seed = config.seed;
        config.attack.seed = config.seed;
        let out = match (&overrides.out, &config.output_dir) {
            (Some(o), _) => o.clone(),
            (None, Some(o)) => base_dir.join(o),
            (None, None) => return Err(CliError::Usage("no output directory: pass --out or set output_dir".into())),
        };
        Ok(Self {
            config,
            config_text,
            base_dir,
            out,
        })
    }

    pub fn seed(&self) -> u64 {
        self.config.seed
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.out.join(rel)
    }

    /// Creates the output directory, echoes the config and records the
    /// invocation.
    pub fn begin(&self, command: &str) -> Result<(), CliError> {
        fs::create_dir_all(&self.out).map_err(|e| io_err(&self.out, e))?;
        if let Some(text) = &self.config_text {
            write_file(&self.path(CONFIG_ECHO), text.as_bytes())?;
        }
        #[derive(Serialize)]
        struct Meta<'a> {
            command: &'a str,
            engine_version: &'a str,
            seed: u64,
            folds: usize,
            started_unix_s: u64,
        }
        let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let meta = Meta {
            command,
            engine_version: trustprobe::ENGINE_VERSION,
            seed: self.seed(),
            folds: self.config.folds.k,
            started_unix_s: started,
        };
        write_json(&self.path(RUN_META), &meta)
    }

    /// The configured manifest, or the one written by `synth`.
    pub fn manifest_path(&self) -> Result<PathBuf, CliError> {
        let path = match &self.config.data.manifest {
            Some(p) => self.base_dir.join(p),
            None => self.path("data/manifest.jsonl"),
        };
        if !path.is_file() {
            return Err(CliError::Data(format!(
                "manifest {} not found; set data.manifest or run synth first",
                path.display()
            )));
        }
        Ok(path)
    }
}

pub fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    write_file(path, text.as_bytes())
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let mut text = String::new();
    for r in rows {
        text.push_str(&serde_json::to_string(r)?);
        text.push('\n');
    }
    write_file(path, text.as_bytes())
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    serde_json::from_str(&read_text(path)?).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    read_text(path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| CliError::Io(format!("{} line {}: {e}", path.display(), i + 1))))
        .collect()
}

/// A manifest with its payloads and the head inputs derived from them.
pub struct Corpus {
    pub manifest: Manifest,
    /// Tensors as stored: `[L, T, D]` embeddings or `[N]` waveforms.
    pub raw: Vec<Tensor<f32>>,
    /// `[L, T, D]` head inputs, index-aligned with the manifest.
    pub embeddings: Vec<Tensor<f32>>,
    /// Present when the payloads are waveforms.
    pub encoder: Option<ToyEncoder<f32>>,
}

impl Corpus {
    pub fn load(run: &Run) -> Result<Self, CliError> {
        let manifest = load_manifest(run.manifest_path()?)?;
        if manifest.is_empty() {
            return Err(CliError::Data("manifest has no records".into()));
        }
        let raw = manifest
            .records
            .par_iter()
            .map(|r| read_tensor(manifest.resolve(r)).map_err(CliError::from))
            .collect::<Result<Vec<_>, _>>()?;
        let rank = raw[0].shape().len();
        if let Some((r, t)) = manifest.records.iter().zip(&raw).find(|(_, t)| t.shape().len() != rank) {
            return Err(CliError::Data(format!("{} has shape {:?}; payloads must share one rank", r.id, t.shape())));
        }
        let (embeddings, encoder) = match rank {
            1 => {
                let section = run
                    .config
                    .model
                    .encoder
                    .ok_or_else(|| CliError::Config("waveform data needs a [model.encoder] section".into()))?;
                let encoder = ToyEncoder::<f32>::new(section.config(run.seed())).map_err(|e| CliError::engine(CliError::Config, e))?;
                let emb = raw
                    .par_iter()
                    .map(|w| encoder.embed(w).map_err(|e| CliError::engine(CliError::Data, e)))
                    .collect::<Result<Vec<_>, _>>()?;
                (emb, Some(encoder))
            }
            3 => (raw.clone(), None),
            r => return Err(CliError::Data(format!("payloads must be rank 1 or 3, got rank {r}"))),
        };
        let (l, d) = (embeddings[0].shape()[0], embeddings[0].shape()[2]);
        if let Some((r, t)) = manifest.records.iter().zip(&embeddings).find(|(_, t)| t.shape()[0] != l || t.shape()[2] != d) {
            return Err(CliError::Data(format!("{} has shape {:?}, expected [{l}, T, {d}]", r.id, t.shape())));
        }
        Ok(Self {
            manifest,
            raw,
            embeddings,
            encoder,
        })
    }

    /// Emotion head sized for these embeddings.
    pub fn head_config(&self, fc_hidden: usize) -> Result<HeadConfig, CliError> {
        let s = self.embeddings[0].shape();
        let mut cfg = HeadConfig::new(s[0], s[2], 4).map_err(|e| CliError::engine(CliError::Config, e))?;
        cfg.fc_hidden = fc_hidden;
        cfg.validate().map_err(|e| CliError::engine(CliError::Config, e))?;
        Ok(cfg)
    }
}
