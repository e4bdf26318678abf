//! The downstream classification head and a frozen toy speech encoder.

mod bundle;
mod encoder;
mod head;

pub use bundle::{load_head, save_head, BUNDLE_INDEX};
pub use encoder::{encoder_forward, frames_for_samples, ToyEncoder, ToyEncoderConfig, FRAME_LEN, HOP};
pub use head::{head_forward, head_logits, HeadConfig, HeadParams, HeadVars, CONV_CHANNELS, DEFAULT_FC_HIDDEN};

use rand::Rng;

use crate::tensor::{Scalar, Tensor};

/// Uniform(−1/√fan_in, 1/√fan_in) tensor.
pub(crate) fn fan_in_uniform<F: Scalar>(rng: &mut impl Rng, shape: &[usize], fan_in: usize) -> Tensor<F> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| F::from_f64(rng.random_range(-bound..bound))).collect();
    Tensor::from_parts(shape.to_vec(), data)
}
