//! Analytic operation counts for one forward pass.
//!
//! Multiplies and adds are counted separately, so a linear map over `T`
//! frames costs `T·(2·D_in·D_out + D_out)` including the bias add.
//! Elementwise nonlinearities cost one operation per element; a softmax over
//! `n` values costs `3n + (n − 1)`.

use serde::{Deserialize, Serialize};

use crate::dataio::SAMPLE_RATE;
use crate::error::{Error, Result};
use crate::model::{frames_for_samples, HeadConfig, ToyEncoderConfig, CONV_CHANNELS, FRAME_LEN};

/// Input length used for cost reporting.
pub const DEFAULT_DURATION_S: f64 = 6.0;

/// What runs in front of the head.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum BackboneCost {
    /// The head consumes precomputed embeddings.
    None,
    ToyEncoder { config: ToyEncoderConfig },
    /// A fixed, externally measured backbone count.
    Declared { flops: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlopsBreakdown {
    pub frames: usize,
    pub backbone: u64,
    pub layer_softmax: u64,
    pub weighted_sum: u64,
    pub conv1: u64,
    pub relu1: u64,
    pub conv2: u64,
    pub relu2: u64,
    pub pool: u64,
    pub fc1: u64,
    pub relu3: u64,
    pub fc2: u64,
}

impl FlopsBreakdown {
    pub fn head(&self) -> u64 {
        self.layer_softmax
            + self.weighted_sum
            + self.conv1
            + self.relu1
            + self.conv2
            + self.relu2
            + self.pool
            + self.fc1
            + self.relu3
            + self.fc2
    }

    pub fn total(&self) -> u64 {
        self.backbone + self.head()
    }
}

/// `T·(2·D_in·D_out + D_out)`.
pub fn linear_flops(frames: usize, d_in: usize, d_out: usize) -> u64 {
    (frames * (2 * d_in * d_out + d_out)) as u64
}

fn softmax_flops(n: usize) -> u64 {
    (3 * n + n.saturating_sub(1)) as u64
}

/// Head cost for an input of `frames` frames.
pub fn head_flops(cfg: &HeadConfig, frames: usize) -> FlopsBreakdown {
    let (l, t, d, k, h, c) = (cfg.layers, frames, cfg.dim, CONV_CHANNELS, cfg.fc_hidden, cfg.num_classes);
    FlopsBreakdown {
        frames,
        backbone: 0,
        layer_softmax: softmax_flops(l),
        weighted_sum: (l * t * d + (l - 1) * t * d) as u64,
        conv1: linear_flops(t, d, k),
        relu1: (t * k) as u64,
        conv2: linear_flops(t, k, k),
        relu2: (t * k) as u64,
        pool: (t * k + k) as u64,
        fc1: linear_flops(1, k, h),
        relu3: h as u64,
        fc2: linear_flops(1, h, c),
    }
}

/// Toy encoder cost: two DFT products without bias, seven elementwise
/// operations per spectral bin (two squares, sum, floor, square root, shift,
/// log) and one linear map plus `tanh` per layer.
fn encoder_flops(cfg: &ToyEncoderConfig, frames: usize) -> u64 {
    let bins = ToyEncoderConfig::BINS;
    let dft = 2 * frames * 2 * FRAME_LEN * bins;
    let spectral = 7 * frames * bins;
    let mut layers = 0u64;
    for k in 0..cfg.layers {
        let d_in = if k == 0 { bins } else { cfg.dim };
        layers += linear_flops(frames, d_in, cfg.dim) + (frames * cfg.dim) as u64;
    }
    (dft + spectral) as u64 + layers
}

/// Cost of one inference on a `duration_s` input.
pub fn flops_count(head: &HeadConfig, backbone: &BackboneCost, duration_s: f64) -> Result<FlopsBreakdown> {
    let samples = (duration_s * SAMPLE_RATE as f64).round();
    let frames = (samples.is_finite() && samples >= 0.0)
        .then(|| frames_for_samples(samples as usize))
        .flatten()
        .ok_or_else(|| Error::Config(format!("duration {duration_s} s is shorter than one frame")))?;
    let mut out = head_flops(head, frames);
    out.backbone = match backbone {
        BackboneCost::None => 0,
        BackboneCost::ToyEncoder { config } => encoder_flops(config, frames),
        BackboneCost::Declared { flops } => *flops,
    };
    Ok(out)
}
