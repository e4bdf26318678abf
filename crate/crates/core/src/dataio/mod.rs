//! Manifests, the binary tensor file format, fold planning, and a synthetic
//! corpus generator.
//!
//! Manifest paths are resolved relative to the manifest's own directory.
//! Waveforms are rank-1 tensor files at [`SAMPLE_RATE`].

mod folds;
mod manifest;
mod synth;
mod tensor_file;

pub use folds::{make_folds, Fold, FoldPlan, FoldScheme, ValPolicy};
pub use manifest::{load_manifest, parse_manifest, write_manifest, Emotion, Gender, Manifest, UtteranceRecord};
pub use synth::{
    counts_from_emotion_totals, synth_dataset, write_dataset, Payload, SynthDataset, SynthSpec,
    IEMOCAP_EMOTION_TOTALS,
};
pub use tensor_file::{decode_tensor, encode_tensor, read_tensor, write_tensor, DTYPE_F32, FORMAT_VERSION, MAGIC};

use std::path::PathBuf;

use thiserror::Error;

use crate::tensor::Tensor;

/// Engine-wide audio sample rate in Hz.
pub const SAMPLE_RATE: usize = 16_000;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic {found:?}")]
    BadMagic { found: [u8; 4] },
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u8),
    #[error("unsupported dtype {0}")]
    UnsupportedDtype(u8),
    #[error("truncated tensor file: expected {expected} bytes, got {got}")]
    Truncated { expected: usize, got: usize },
    #[error("tensor file has {extra} trailing bytes")]
    TrailingBytes { extra: usize },
    #[error("refusing to write a tensor containing non-finite values")]
    NonFinite,
    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
    #[error("manifest line {line}: unknown {field} {token:?}")]
    UnknownToken {
        line: usize,
        field: &'static str,
        token: String,
    },
    #[error("duplicate id {id:?} on lines {first} and {second}")]
    DuplicateId { id: String, first: usize, second: usize },
    #[error("manifest line {line}: tensor file {path} not found")]
    MissingTensor { line: usize, path: PathBuf },
    #[error("bad embedding sequence: {0}")]
    BadSequence(String),
    #[error("cannot plan folds: {0}")]
    Folds(String),
    #[error("cannot synthesize dataset: {0}")]
    Synth(String),
}

impl DataError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DataError::Io {
            path: path.into(),
            source,
        }
    }
}

/// Layer outputs of a frozen encoder for one utterance, shaped `[L, T, D]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSequence(Tensor<f32>);

impl EmbeddingSequence {
    pub fn new(values: Tensor<f32>) -> Result<Self, DataError> {
        match values.shape() {
            [l, t, d] if *l > 0 && *t > 0 && *d > 0 => {}
            s => return Err(DataError::BadSequence(format!("expected [L, T, D] with L, T, D >= 1, got {s:?}"))),
        }
        if !values.is_finite() {
            return Err(DataError::BadSequence("non-finite values".into()));
        }
        Ok(Self(values))
    }

    pub fn layers(&self) -> usize {
        self.0.shape()[0]
    }

    pub fn frames(&self) -> usize {
        self.0.shape()[1]
    }

    pub fn dims(&self) -> usize {
        self.0.shape()[2]
    }

    pub fn tensor(&self) -> &Tensor<f32> {
        &self.0
    }

    pub fn into_tensor(self) -> Tensor<f32> {
        self.0
    }

    /// Keeps the first `max_frames` frames of every layer.
    pub fn truncate_frames(&self, max_frames: usize) -> Self {
        let (l, t, d) = (self.layers(), self.frames(), self.dims());
        if max_frames == 0 || max_frames >= t {
            return self.clone();
        }
        let mut data = Vec::with_capacity(l * max_frames * d);
        for layer in 0..l {
            let base = layer * t * d;
            data.extend_from_slice(&self.0.data()[base..base + max_frames * d]);
        }
        Self(Tensor::from_parts(vec![l, max_frames, d], data))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequence_requires_rank_three() {
        assert!(EmbeddingSequence::new(Tensor::zeros(&[2, 3])).is_err());
        assert!(EmbeddingSequence::new(Tensor::zeros(&[2, 0, 3])).is_err());
        let s = EmbeddingSequence::new(Tensor::zeros(&[2, 5, 3])).unwrap();
        assert_eq!((s.layers(), s.frames(), s.dims()), (2, 5, 3));
    }

    #[test]
    fn truncation_keeps_leading_frames_per_layer() {
        let data: Vec<f32> = (0..12).map(|v| v as f32).collect();
        let s = EmbeddingSequence::new(Tensor::new(vec![2, 3, 2], data).unwrap()).unwrap();
        let t = s.truncate_frames(2);
        assert_eq!(t.tensor().shape(), &[2, 2, 2]);
        assert_eq!(t.tensor().data(), &[0., 1., 2., 3., 6., 7., 8., 9.]);
        assert_eq!(s.truncate_frames(10), s);
    }
}
