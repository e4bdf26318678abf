//! Frozen toy speech encoder: waveform in, `[K, T, D]` hidden states out.
//!
//! Per 400-sample frame (hop 160): Hann window and real DFT folded into two
//! constant matrices, magnitude `sqrt(re² + im² + 1e-8)`, `log(1 + ·)`, then
//! `K` seeded `tanh` layers. The first layer maps the 201 spectral bins to
//! `D`; the rest are `D → D`. Every layer's output is one emitted layer.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::fan_in_uniform;
use crate::dataio::SAMPLE_RATE;
use crate::error::{Error, Result};
use crate::rng::{self, streams};
use crate::tensor::{Scalar, Tape, Tensor, Var};

pub const FRAME_LEN: usize = 400;
pub const HOP: usize = 160;
const MAG_FLOOR: f64 = 1e-8;

/// Frame count for `n` samples, or `None` below one frame.
pub fn frames_for_samples(n: usize) -> Option<usize> {
    (n >= FRAME_LEN).then(|| (n - FRAME_LEN) / HOP + 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyEncoderConfig {
    pub layers: usize,
    pub dim: usize,
    pub seed: u64,
}

impl ToyEncoderConfig {
    pub const SAMPLE_RATE: usize = SAMPLE_RATE;
    pub const FRAME_LEN: usize = FRAME_LEN;
    pub const HOP: usize = HOP;
    pub const BINS: usize = FRAME_LEN / 2 + 1;

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.dim == 0 {
            return Err(Error::Config(format!("encoder needs positive layers and dim, got {self:?}")));
        }
        Ok(())
    }

    /// Frozen scalars in the seeded layers; the DFT matrices are not counted.
    pub fn frozen_param_count(&self) -> usize {
        let d = self.dim;
        Self::BINS * d + d + (self.layers - 1) * (d * d + d)
    }
}

/// Materialized encoder constants.
#[derive(Debug, Clone)]
pub struct ToyEncoder<F: Scalar = f32> {
    pub config: ToyEncoderConfig,
    dft_re: Tensor<F>,
    dft_im: Tensor<F>,
    weights: Vec<Tensor<F>>,
    biases: Vec<Tensor<F>>,
}

impl<F: Scalar> ToyEncoder<F> {
    pub fn new(config: ToyEncoderConfig) -> Result<Self> {
        config.validate()?;
        let bins = ToyEncoderConfig::BINS;
        let mut re = Vec::with_capacity(FRAME_LEN * bins);
        let mut im = Vec::with_capacity(FRAME_LEN * bins);
        for n in 0..FRAME_LEN {
            let w = 0.5 - 0.5 * (2.0 * PI * n as f64 / FRAME_LEN as f64).cos();
            for k in 0..bins {
                let phase = 2.0 * PI * (k * n % FRAME_LEN) as f64 / FRAME_LEN as f64;
                re.push(F::from_f64(w * phase.cos()));
                im.push(F::from_f64(-w * phase.sin()));
            }
        }
        let mut rng = rng::stream(config.seed, streams::ENCODER);
        let mut weights = Vec::with_capacity(config.layers);
        let mut biases = Vec::with_capacity(config.layers);
        for k in 0..config.layers {
            let fan_in = if k == 0 { bins } else { config.dim };
            weights.push(fan_in_uniform(&mut rng, &[fan_in, config.dim], fan_in));
            biases.push(fan_in_uniform(&mut rng, &[config.dim], fan_in));
        }
        Ok(Self {
            config,
            dft_re: Tensor::from_parts(vec![FRAME_LEN, bins], re),
            dft_im: Tensor::from_parts(vec![FRAME_LEN, bins], im),
            weights,
            biases,
        })
    }

    /// Embeddings for a waveform without keeping the tape.
    pub fn embed(&self, waveform: &Tensor<F>) -> Result<Tensor<F>> {
        let mut tape = Tape::new();
        let x = tape.constant(waveform.clone())?;
        let out = encoder_forward(&mut tape, self, x)?;
        Ok(tape.value(out)?.clone())
    }
}

/// Records the encoder on `tape`. All constants enter as non-trainable leaves,
/// so gradients reach only `waveform`.
pub fn encoder_forward<F: Scalar>(tape: &mut Tape<F>, encoder: &ToyEncoder<F>, waveform: Var) -> Result<Var> {
    let shape = tape.value(waveform)?.shape().to_vec();
    match shape.as_slice() {
        [n] if *n >= FRAME_LEN => {}
        _ => {
            return Err(Error::Shape {
                expected: format!("[N] with N >= {FRAME_LEN}"),
                got: shape,
            })
        }
    }
    let frames = tape.frame(waveform, FRAME_LEN, HOP)?;
    let re_m = tape.constant(encoder.dft_re.clone())?;
    let im_m = tape.constant(encoder.dft_im.clone())?;
    let re = tape.matmul(frames, re_m)?;
    let im = tape.matmul(frames, im_m)?;
    let re2 = tape.mul(re, re)?;
    let im2 = tape.mul(im, im)?;
    let power = tape.add(re2, im2)?;
    let power = tape.add_scalar(power, MAG_FLOOR)?;
    let mag = tape.sqrt(power)?;
    let shifted = tape.add_scalar(mag, 1.0)?;
    let mut h = tape.log(shifted)?;

    let mut outputs = Vec::with_capacity(encoder.config.layers);
    for (w, b) in encoder.weights.iter().zip(&encoder.biases) {
        let w = tape.constant(w.clone())?;
        let b = tape.constant(b.clone())?;
        let z = tape.matmul(h, w)?;
        let z = tape.add_bias(z, b)?;
        h = tape.tanh(z)?;
        outputs.push(h);
    }
    Ok(tape.stack(&outputs)?)
}
