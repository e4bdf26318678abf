//! Synthetic corpora with controllable class signal and gender leakage.
//!
//! Every frame of every layer is `separation·μ[class, layer] +
//! gender_leakage·ν[gender, layer] + z`, with `μ`, `ν` random unit directions
//! and `z ~ N(0, I)`. Waveform payloads use tones instead: one frequency per
//! class, one per gender, on top of white noise.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{write_manifest, write_tensor, DataError, Emotion, EmbeddingSequence, Gender, Manifest, UtteranceRecord, SAMPLE_RATE};
use crate::rng::{self, streams};
use crate::tensor::Tensor;

/// Per-emotion utterance totals of the IEMOCAP four-class subset.
pub const IEMOCAP_EMOTION_TOTALS: [usize; 4] = [1708, 1636, 1084, 1103];

/// Geometry of the toy front end, used to express frame counts as durations.
const FRAME_LEN: usize = 400;
const HOP: usize = 160;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Payload {
    Embeddings { layers: usize, frames: usize, dims: usize },
    Waveforms { samples: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub dataset_name: String,
    /// Utterance counts indexed `[emotion][gender]`.
    pub counts: [[usize; 2]; 4],
    pub payload: Payload,
    pub separation: f64,
    pub gender_leakage: f64,
    pub speakers_per_gender: usize,
    /// When set, speaker `s` of each gender records in session `s % sessions`.
    #[serde(default)]
    pub sessions: Option<usize>,
    pub seed: u64,
}

/// Splits per-emotion totals evenly across genders, odd remainders female.
pub fn counts_from_emotion_totals(totals: [usize; 4]) -> [[usize; 2]; 4] {
    totals.map(|n| [n - n / 2, n / 2])
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub manifest: Manifest,
    /// One tensor per record, index-aligned with `manifest.records`.
    pub tensors: Vec<Tensor<f32>>,
}

impl SynthDataset {
    pub fn embeddings(&self) -> Result<Vec<EmbeddingSequence>, DataError> {
        self.tensors.iter().cloned().map(EmbeddingSequence::new).collect()
    }
}

fn unit_direction(rng: &mut impl Rng, dims: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dims).map(|_| StandardNormal.sample(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

pub fn synth_dataset(spec: &SynthSpec) -> Result<SynthDataset, DataError> {
    let total: usize = spec.counts.iter().flatten().sum();
    if total == 0 {
        return Err(DataError::Synth("total utterance count is zero".into()));
    }
    if !(spec.separation >= 0.0 && spec.separation.is_finite()) {
        return Err(DataError::Synth(format!("separation must be >= 0, got {}", spec.separation)));
    }
    if !(spec.gender_leakage >= 0.0 && spec.gender_leakage.is_finite()) {
        return Err(DataError::Synth(format!(
            "gender_leakage must be >= 0, got {}",
            spec.gender_leakage
        )));
    }
    if spec.speakers_per_gender == 0 {
        return Err(DataError::Synth("speakers_per_gender must be positive".into()));
    }
    if let Some(s) = spec.sessions {
        if s == 0 || s > spec.speakers_per_gender {
            return Err(DataError::Synth(format!(
                "sessions must be in 1..={}, got {s}",
                spec.speakers_per_gender
            )));
        }
    }
    // Embedding payloads are timed as if produced by the toy front end.
    let samples = match spec.payload {
        Payload::Embeddings { layers, frames, dims } => {
            if layers == 0 || frames == 0 || dims == 0 {
                return Err(DataError::Synth("layers, frames and dims must be positive".into()));
            }
            FRAME_LEN + (frames - 1) * HOP
        }
        Payload::Waveforms { samples } => {
            if samples < FRAME_LEN {
                return Err(DataError::Synth(format!("waveforms need at least {FRAME_LEN} samples")));
            }
            samples
        }
    };
    let duration_s = samples as f64 / SAMPLE_RATE as f64;

    let mut mean_rng = rng::stream(spec.seed, streams::SYNTH_MEANS);
    let mut noise_rng = rng::stream(spec.seed, streams::SYNTH_NOISE);
    let means = Means::draw(&mut mean_rng, spec.payload);

    let mut records = Vec::with_capacity(total);
    let mut tensors = Vec::with_capacity(total);
    let mut per_gender = [0usize; 2];
    for emotion in Emotion::ALL {
        for gender in Gender::ALL {
            for _ in 0..spec.counts[emotion.index()][gender.index()] {
                let slot = per_gender[gender.index()];
                per_gender[gender.index()] += 1;
                let speaker = slot % spec.speakers_per_gender;
                let id = format!("{}_{:05}", spec.dataset_name, records.len());
                let session_id = spec.sessions.map(|s| format!("S{}", speaker % s + 1));
                let tensor = means.sample(&mut noise_rng, spec, emotion, gender);
                records.push(UtteranceRecord {
                    tensor_path: format!("tensors/{id}.tsrb"),
                    id,
                    emotion,
                    speaker_id: format!("{}{:02}", if gender == Gender::Female { "F" } else { "M" }, speaker),
                    gender,
                    session_id,
                    duration_s,
                });
                tensors.push(tensor);
            }
        }
    }
    Ok(SynthDataset {
        manifest: Manifest::new(spec.dataset_name.clone(), records, "."),
        tensors,
    })
}

enum Means {
    /// `class[c][l]`, `gender[g][l]` unit directions of length `dims`.
    Embeddings {
        class: Vec<Vec<Vec<f64>>>,
        gender: Vec<Vec<Vec<f64>>>,
        layers: usize,
        frames: usize,
        dims: usize,
    },
    /// Tone frequencies in Hz; phases are drawn per utterance.
    Waveforms {
        class_hz: [f64; 4],
        gender_hz: [f64; 2],
        samples: usize,
    },
}

impl Means {
    fn draw(rng: &mut impl Rng, payload: Payload) -> Self {
        match payload {
            Payload::Embeddings { layers, frames, dims } => {
                let mut block = |n: usize| -> Vec<Vec<Vec<f64>>> {
                    (0..n).map(|_| (0..layers).map(|_| unit_direction(rng, dims)).collect()).collect()
                };
                let class = block(4);
                let gender = block(2);
                Means::Embeddings {
                    class,
                    gender,
                    layers,
                    frames,
                    dims,
                }
            }
            Payload::Waveforms { samples } => Means::Waveforms {
                class_hz: [440.0, 880.0, 1320.0, 1760.0],
                gender_hz: [210.0, 120.0],
                samples,
            },
        }
    }

    fn sample(&self, rng: &mut impl Rng, spec: &SynthSpec, emotion: Emotion, gender: Gender) -> Tensor<f32> {
        match self {
            Means::Embeddings {
                class,
                gender: gmeans,
                layers,
                frames,
                dims,
            } => {
                let mut data = Vec::with_capacity(layers * frames * dims);
                for l in 0..*layers {
                    let mu = &class[emotion.index()][l];
                    let nu = &gmeans[gender.index()][l];
                    for _ in 0..*frames {
                        for d in 0..*dims {
                            let z: f64 = StandardNormal.sample(rng);
                            data.push((spec.separation * mu[d] + spec.gender_leakage * nu[d] + z) as f32);
                        }
                    }
                }
                Tensor::from_parts(vec![*layers, *frames, *dims], data)
            }
            Means::Waveforms {
                class_hz,
                gender_hz,
                samples,
            } => {
                let phase_c: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                let phase_g: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                let wc = std::f64::consts::TAU * class_hz[emotion.index()] / SAMPLE_RATE as f64;
                let wg = std::f64::consts::TAU * gender_hz[gender.index()] / SAMPLE_RATE as f64;
                let data = (0..*samples)
                    .map(|n| {
                        let z: f64 = StandardNormal.sample(rng);
                        let t = n as f64;
                        (0.1 * z
                            + 0.1 * spec.separation * (wc * t + phase_c).sin()
                            + 0.1 * spec.gender_leakage * (wg * t + phase_g).sin()) as f32
                    })
                    .collect();
                Tensor::from_parts(vec![*samples], data)
            }
        }
    }
}

/// Writes `manifest.jsonl` and `tensors/*.tsrb` under `dir`; returns the
/// manifest rebased onto `dir`.
pub fn write_dataset(dir: impl AsRef<Path>, data: &SynthDataset) -> Result<Manifest, DataError> {
    let dir = dir.as_ref();
    let tensor_dir = dir.join("tensors");
    fs::create_dir_all(&tensor_dir).map_err(|e| DataError::io(&tensor_dir, e))?;
    for (record, tensor) in data.manifest.records.iter().zip(&data.tensors) {
        write_tensor(dir.join(&record.tensor_path), tensor)?;
    }
    let mut manifest = data.manifest.clone();
    manifest.base_dir = dir.to_path_buf();
    write_manifest(dir.join("manifest.jsonl"), &manifest)?;
    Ok(manifest)
}
