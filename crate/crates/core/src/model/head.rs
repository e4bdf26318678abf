//! Downstream emotion head.
//!
//! The pipeline, per utterance with embeddings `x[L, T, D]`:
//!
//! 1. `a = softmax(w)`, `H = Σ_l a_l·x[l]` (`[T, D]`)
//! 2. two pointwise convolutions of width 128 with ReLU after each, applied
//!    frame by frame as linear maps
//! 3. mean over frames to a 128-vector
//! 4. `fc1 → ReLU → fc2` to `C` logits

use serde::{Deserialize, Serialize};

use super::fan_in_uniform;
use crate::error::{Error, Result};
use crate::rng::{self, streams};
use crate::tensor::{Scalar, Tape, Tensor, Var};

/// Filter count of both pointwise convolutions.
pub const CONV_CHANNELS: usize = 128;
pub const DEFAULT_FC_HIDDEN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeadConfig {
    pub layers: usize,
    pub dim: usize,
    #[serde(default = "default_fc_hidden")]
    pub fc_hidden: usize,
    pub num_classes: usize,
}

fn default_fc_hidden() -> usize {
    DEFAULT_FC_HIDDEN
}

impl HeadConfig {
    pub fn new(layers: usize, dim: usize, num_classes: usize) -> Result<Self> {
        let cfg = Self {
            layers,
            dim,
            fc_hidden: DEFAULT_FC_HIDDEN,
            num_classes,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.dim == 0 || self.fc_hidden == 0 {
            return Err(Error::Config(format!(
                "head needs positive layers, dim and fc_hidden, got {self:?}"
            )));
        }
        if self.num_classes < 2 {
            return Err(Error::Config(format!("head needs at least 2 classes, got {}", self.num_classes)));
        }
        Ok(())
    }

    /// Trainable scalars in a head of this shape.
    pub fn param_count(&self) -> usize {
        let (l, d, h, c, k) = (self.layers, self.dim, self.fc_hidden, self.num_classes, CONV_CHANNELS);
        l + (d * k + k) + (k * k + k) + (k * h + h) + (h * c + c)
    }
}

/// Trainable head parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams<F: Scalar = f32> {
    pub config: HeadConfig,
    pub layer_logits: Tensor<F>,
    pub conv1_w: Tensor<F>,
    pub conv1_b: Tensor<F>,
    pub conv2_w: Tensor<F>,
    pub conv2_b: Tensor<F>,
    pub fc1_w: Tensor<F>,
    pub fc1_b: Tensor<F>,
    pub fc2_w: Tensor<F>,
    pub fc2_b: Tensor<F>,
}

/// Tape handles for a recorded [`HeadParams`], in [`HeadParams::NAMES`] order.
#[derive(Debug, Clone, Copy)]
pub struct HeadVars {
    pub layer_logits: Var,
    pub conv1_w: Var,
    pub conv1_b: Var,
    pub conv2_w: Var,
    pub conv2_b: Var,
    pub fc1_w: Var,
    pub fc1_b: Var,
    pub fc2_w: Var,
    pub fc2_b: Var,
}

impl HeadVars {
    pub fn all(&self) -> [Var; 9] {
        [
            self.layer_logits,
            self.conv1_w,
            self.conv1_b,
            self.conv2_w,
            self.conv2_b,
            self.fc1_w,
            self.fc1_b,
            self.fc2_w,
            self.fc2_b,
        ]
    }
}

impl<F: Scalar> HeadParams<F> {
    pub const NAMES: [&'static str; 9] = [
        "layer_logits",
        "conv1_w",
        "conv1_b",
        "conv2_w",
        "conv2_b",
        "fc1_w",
        "fc1_b",
        "fc2_w",
        "fc2_b",
    ];

    /// Fan-in uniform weights and biases; layer logits start at zero.
    pub fn init(config: HeadConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = rng::stream(seed, streams::HEAD_INIT);
        let (d, k, h, c) = (config.dim, CONV_CHANNELS, config.fc_hidden, config.num_classes);
        Ok(Self {
            config,
            layer_logits: Tensor::zeros(&[config.layers]),
            conv1_w: fan_in_uniform(&mut rng, &[d, k], d),
            conv1_b: fan_in_uniform(&mut rng, &[k], d),
            conv2_w: fan_in_uniform(&mut rng, &[k, k], k),
            conv2_b: fan_in_uniform(&mut rng, &[k], k),
            fc1_w: fan_in_uniform(&mut rng, &[k, h], k),
            fc1_b: fan_in_uniform(&mut rng, &[h], k),
            fc2_w: fan_in_uniform(&mut rng, &[h, c], h),
            fc2_b: fan_in_uniform(&mut rng, &[c], h),
        })
    }

    pub fn tensors(&self) -> [&Tensor<F>; 9] {
        [
            &self.layer_logits,
            &self.conv1_w,
            &self.conv1_b,
            &self.conv2_w,
            &self.conv2_b,
            &self.fc1_w,
            &self.fc1_b,
            &self.fc2_w,
            &self.fc2_b,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor<F>; 9] {
        [
            &mut self.layer_logits,
            &mut self.conv1_w,
            &mut self.conv1_b,
            &mut self.conv2_w,
            &mut self.conv2_b,
            &mut self.fc1_w,
            &mut self.fc1_b,
            &mut self.fc2_w,
            &mut self.fc2_b,
        ]
    }

    /// Expected shape of each tensor, in [`Self::NAMES`] order.
    pub fn expected_shapes(config: &HeadConfig) -> [Vec<usize>; 9] {
        let (l, d, k, h, c) = (config.layers, config.dim, CONV_CHANNELS, config.fc_hidden, config.num_classes);
        [
            vec![l],
            vec![d, k],
            vec![k],
            vec![k, k],
            vec![k],
            vec![k, h],
            vec![h],
            vec![h, c],
            vec![c],
        ]
    }

    /// Assembles parameters from tensors in [`Self::NAMES`] order.
    pub fn from_tensors(config: HeadConfig, tensors: Vec<Tensor<F>>) -> Result<Self> {
        config.validate()?;
        let shapes = Self::expected_shapes(&config);
        if tensors.len() != 9 {
            return Err(Error::Config(format!("head needs 9 tensors, got {}", tensors.len())));
        }
        for ((t, want), name) in tensors.iter().zip(&shapes).zip(Self::NAMES) {
            if t.shape() != want.as_slice() {
                return Err(Error::Shape {
                    expected: format!("{name} {want:?}"),
                    got: t.shape().to_vec(),
                });
            }
            if !t.is_finite() {
                return Err(Error::Config(format!("{name} has non-finite values")));
            }
        }
        let mut it = tensors.into_iter();
        let mut next = || it.next().expect("nine tensors");
        Ok(Self {
            config,
            layer_logits: next(),
            conv1_w: next(),
            conv1_b: next(),
            conv2_w: next(),
            conv2_b: next(),
            fc1_w: next(),
            fc1_b: next(),
            fc2_w: next(),
            fc2_b: next(),
        })
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.numel()).sum()
    }

    pub fn cast<G: Scalar>(&self) -> HeadParams<G> {
        let t = self.tensors().map(|t| t.cast::<G>());
        let [layer_logits, conv1_w, conv1_b, conv2_w, conv2_b, fc1_w, fc1_b, fc2_w, fc2_b] = t;
        HeadParams {
            config: self.config,
            layer_logits,
            conv1_w,
            conv1_b,
            conv2_w,
            conv2_b,
            fc1_w,
            fc1_b,
            fc2_w,
            fc2_b,
        }
    }

    /// Records the parameters as variables (`trainable`) or constants.
    pub fn record(&self, tape: &mut Tape<F>, trainable: bool) -> Result<HeadVars> {
        let mut put = |t: &Tensor<F>| -> Result<Var> {
            Ok(if trainable {
                tape.variable(t.clone())?
            } else {
                tape.constant(t.clone())?
            })
        };
        Ok(HeadVars {
            layer_logits: put(&self.layer_logits)?,
            conv1_w: put(&self.conv1_w)?,
            conv1_b: put(&self.conv1_b)?,
            conv2_w: put(&self.conv2_w)?,
            conv2_b: put(&self.conv2_b)?,
            fc1_w: put(&self.fc1_w)?,
            fc1_b: put(&self.fc1_b)?,
            fc2_w: put(&self.fc2_w)?,
            fc2_b: put(&self.fc2_b)?,
        })
    }
}

/// Records the head pipeline on `tape` and returns the logits handle.
///
/// `emb` must hold a `[L, T, D]` tensor matching the head configuration.
pub fn head_forward<F: Scalar>(tape: &mut Tape<F>, config: &HeadConfig, vars: &HeadVars, emb: Var) -> Result<Var> {
    let shape = tape.value(emb)?.shape().to_vec();
    match shape.as_slice() {
        [l, t, d] if *l == config.layers && *d == config.dim && *t > 0 => {}
        _ => {
            return Err(Error::Shape {
                expected: format!("[{}, T, {}]", config.layers, config.dim),
                got: shape,
            })
        }
    }
    let weights = tape.softmax(vars.layer_logits)?;
    let mixed = tape.weighted_sum(weights, emb)?;

    let h = tape.matmul(mixed, vars.conv1_w)?;
    let h = tape.add_bias(h, vars.conv1_b)?;
    let h = tape.relu(h)?;
    let h = tape.matmul(h, vars.conv2_w)?;
    let h = tape.add_bias(h, vars.conv2_b)?;
    let h = tape.relu(h)?;
    let pooled = tape.mean_axis(h, 0)?;

    let z = tape.matmul(pooled, vars.fc1_w)?;
    let z = tape.add_bias(z, vars.fc1_b)?;
    let z = tape.relu(z)?;
    let z = tape.matmul(z, vars.fc2_w)?;
    Ok(tape.add_bias(z, vars.fc2_b)?)
}

/// Logits without keeping the tape.
pub fn head_logits<F: Scalar>(params: &HeadParams<F>, emb: &Tensor<F>) -> Result<Tensor<F>> {
    let mut tape = Tape::new();
    let vars = params.record(&mut tape, false)?;
    let x = tape.constant(emb.clone())?;
    let logits = head_forward(&mut tape, &params.config, &vars, x)?;
    Ok(tape.value(logits)?.clone())
}
