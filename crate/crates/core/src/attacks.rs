//! Gradient-sign adversarial attacks, an SNR-matched Gaussian baseline, and
//! attack success rate.
//!
//! The perturbation budget is set per utterance from a signal-to-noise
//! ratio: `ε = rms(x)·10^(−snr/20)`. An FGSM step moves every coordinate
//! with a nonzero gradient by exactly `±ε`, so its noise power matches the
//! target SNR.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{encoder_forward, head_forward, HeadParams, ToyEncoder};
use crate::rng::{self, streams};
use crate::tensor::{Scalar, Tape, Tensor, TensorError, Var};
use crate::training::argmax;

pub const DEFAULT_SNR_DB: f64 = 45.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackKind {
    Fgsm,
    Pgd,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackSurface {
    /// Perturb the raw waveform and differentiate through the toy encoder.
    Waveform,
    /// Perturb the head input directly.
    Embedding,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttackConfig {
    pub kind: AttackKind,
    /// `inf` means no perturbation.
    pub snr_db: f64,
    pub pgd_steps: usize,
    /// PGD step size as a multiple of `ε`.
    pub pgd_step_ratio: f64,
    pub surface: AttackSurface,
    /// Base seed of the Gaussian baseline; item `i` uses `seed + i`.
    pub seed: u64,
    /// Replaces the SNR-derived budget with a fixed `ε`.
    pub epsilon_override: Option<f64>,
    /// Clamp adversarial inputs to `[-1, 1]`.
    pub clip_unit: bool,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            kind: AttackKind::Fgsm,
            snr_db: DEFAULT_SNR_DB,
            pgd_steps: 10,
            pgd_step_ratio: 0.25,
            surface: AttackSurface::Embedding,
            seed: 0,
            epsilon_override: None,
            clip_unit: false,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        if self.snr_db.is_nan() || self.snr_db == f64::NEG_INFINITY {
            return Err(Error::Config(format!("snr_db must be a number or +inf, got {}", self.snr_db)));
        }
        if self.kind == AttackKind::Pgd && (self.pgd_steps == 0 || !(self.pgd_step_ratio > 0.0 && self.pgd_step_ratio.is_finite())) {
            return Err(Error::Config("pgd needs pgd_steps >= 1 and pgd_step_ratio > 0".into()));
        }
        if let Some(e) = self.epsilon_override {
            if !(e >= 0.0 && e.is_finite()) {
                return Err(Error::Config(format!("epsilon_override must be >= 0, got {e}")));
            }
        }
        Ok(())
    }
}

/// A classifier whose cross-entropy loss can be differentiated with respect
/// to its input.
pub trait Differentiable: Sync {
    /// Logits and the loss against `label`.
    fn evaluate(&self, x: &Tensor<f32>, label: usize) -> Result<(Vec<f32>, f64)>;
    /// Loss against `label` and its gradient with respect to `x`.
    fn gradient(&self, x: &Tensor<f32>, label: usize) -> Result<(f64, Tensor<f32>)>;
}

fn run_tape(
    x: &Tensor<f32>,
    label: usize,
    want_grad: bool,
    build: impl FnOnce(&mut Tape<f32>, Var) -> Result<Var>,
) -> Result<(Vec<f32>, f64, Option<Tensor<f32>>)> {
    let mut tape = Tape::new();
    let input = if want_grad {
        tape.variable(x.clone())?
    } else {
        tape.constant(x.clone())?
    };
    let logits = build(&mut tape, input)?;
    let loss = tape.cross_entropy(logits, label)?;
    let value = tape.value(loss)?.item()?.as_f64();
    let grad = if want_grad {
        let grads = tape.backward(loss).map_err(|e| match e {
            TensorError::NonFinite { op } => Error::NonFiniteGradient {
                item: String::new(),
                detail: format!("{op} produced a non-finite gradient"),
            },
            e => e.into(),
        })?;
        Some(grads.wrt(input)?.clone())
    } else {
        None
    };
    Ok((tape.value(logits)?.data().to_vec(), value, grad))
}

/// The head alone, attacked at its `[L, T, D]` input.
#[derive(Debug, Clone, Copy)]
pub struct HeadModel<'a> {
    pub params: &'a HeadParams<f32>,
}

impl Differentiable for HeadModel<'_> {
    fn evaluate(&self, x: &Tensor<f32>, label: usize) -> Result<(Vec<f32>, f64)> {
        let (logits, loss, _) = run_tape(x, label, false, |tape, x| head_path(tape, self.params, x))?;
        Ok((logits, loss))
    }

    fn gradient(&self, x: &Tensor<f32>, label: usize) -> Result<(f64, Tensor<f32>)> {
        let (_, loss, grad) = run_tape(x, label, true, |tape, x| head_path(tape, self.params, x))?;
        Ok((loss, grad.expect("requested")))
    }
}

fn head_path(tape: &mut Tape<f32>, params: &HeadParams<f32>, x: Var) -> Result<Var> {
    let vars = params.record(tape, false)?;
    head_forward(tape, &params.config, &vars, x)
}

/// Toy encoder followed by the head, attacked at the waveform.
#[derive(Debug, Clone, Copy)]
pub struct EncoderHead<'a> {
    pub encoder: &'a ToyEncoder<f32>,
    pub params: &'a HeadParams<f32>,
}

impl EncoderHead<'_> {
    fn path(&self, tape: &mut Tape<f32>, wave: Var) -> Result<Var> {
        let emb = encoder_forward(tape, self.encoder, wave)?;
        head_path(tape, self.params, emb)
    }
}

impl Differentiable for EncoderHead<'_> {
    fn evaluate(&self, x: &Tensor<f32>, label: usize) -> Result<(Vec<f32>, f64)> {
        let (logits, loss, _) = run_tape(x, label, false, |tape, x| self.path(tape, x))?;
        Ok((logits, loss))
    }

    fn gradient(&self, x: &Tensor<f32>, label: usize) -> Result<(f64, Tensor<f32>)> {
        let (_, loss, grad) = run_tape(x, label, true, |tape, x| self.path(tape, x))?;
        Ok((loss, grad.expect("requested")))
    }
}

/// `logits = x·W + b` on a `[D]` input, with `W: [D, C]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearClassifier {
    pub weights: Tensor<f32>,
    pub bias: Tensor<f32>,
}

impl LinearClassifier {
    fn path(&self, tape: &mut Tape<f32>, x: Var) -> Result<Var> {
        let w = tape.constant(self.weights.clone())?;
        let b = tape.constant(self.bias.clone())?;
        let z = tape.matmul(x, w)?;
        Ok(tape.add_bias(z, b)?)
    }
}

impl Differentiable for LinearClassifier {
    fn evaluate(&self, x: &Tensor<f32>, label: usize) -> Result<(Vec<f32>, f64)> {
        let (logits, loss, _) = run_tape(x, label, false, |tape, x| self.path(tape, x))?;
        Ok((logits, loss))
    }

    fn gradient(&self, x: &Tensor<f32>, label: usize) -> Result<(f64, Tensor<f32>)> {
        let (_, loss, grad) = run_tape(x, label, true, |tape, x| self.path(tape, x))?;
        Ok((loss, grad.expect("requested")))
    }
}

/// Budget for a target SNR: `rms(x)·10^(−snr_db/20)`. Zero for an all-zero
/// input or an infinite SNR.
pub fn epsilon_for_snr(x: &Tensor<f32>, snr_db: f64) -> Result<f64> {
    if x.numel() == 0 {
        return Err(Error::Attack("empty input".into()));
    }
    if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
        return Err(Error::Config(format!("snr_db must be a number or +inf, got {snr_db}")));
    }
    if snr_db == f64::INFINITY {
        return Ok(0.0);
    }
    Ok(x.rms() * 10f64.powf(-snr_db / 20.0))
}

/// `10·log10(Σx² / Σδ²)` for `δ = adv − x`; infinite when `δ = 0`.
pub fn measured_snr_db(x: &Tensor<f32>, adv: &Tensor<f32>) -> f64 {
    let signal: f64 = x.data().iter().map(|&v| (v as f64).powi(2)).sum();
    let noise: f64 = x.data().iter().zip(adv.data()).map(|(&a, &b)| (b as f64 - a as f64).powi(2)).sum();
    if noise == 0.0 {
        return f64::INFINITY;
    }
    10.0 * (signal / noise).log10()
}

fn sign(v: f32) -> f32 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `x + step·sign(g)`, leaving coordinates with `sign(g) = 0` (or a zero
/// step) untouched.
fn signed_step(x: &Tensor<f32>, g: &Tensor<f32>, step: f32) -> Tensor<f32> {
    let mut out = x.clone();
    if step == 0.0 {
        return out;
    }
    for (o, &gi) in out.data_mut().iter_mut().zip(g.data()) {
        let s = sign(gi);
        if s != 0.0 {
            *o += step * s;
        }
    }
    out
}

fn check_gradient(g: &Tensor<f32>) -> Result<()> {
    if g.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFiniteGradient {
            item: String::new(),
            detail: "input gradient has non-finite entries".into(),
        })
    }
}

fn check_budget(eps: f64) -> Result<()> {
    if eps >= 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("epsilon must be >= 0, got {eps}")))
    }
}

/// One signed-gradient step of size `eps`.
pub fn fgsm(model: &dyn Differentiable, x: &Tensor<f32>, label: usize, eps: f64) -> Result<Tensor<f32>> {
    check_budget(eps)?;
    let (_, g) = model.gradient(x, label)?;
    check_gradient(&g)?;
    Ok(signed_step(x, &g, eps as f32))
}

/// `steps` signed steps of size `alpha`, each projected back into the
/// max-norm ball of radius `eps` around `x`.
pub fn pgd(model: &dyn Differentiable, x: &Tensor<f32>, label: usize, eps: f64, alpha: f64, steps: usize) -> Result<Tensor<f32>> {
    check_budget(eps)?;
    if eps == 0.0 && steps > 0 {
        return Ok(x.clone());
    }
    if steps == 0 || !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::Config(format!("pgd needs steps >= 1 and alpha > 0, got {steps}, {alpha}")));
    }
    let e = eps as f32;
    let mut adv = x.clone();
    for _ in 0..steps {
        let (_, g) = model.gradient(&adv, label)?;
        check_gradient(&g)?;
        adv = signed_step(&adv, &g, alpha as f32);
        for (a, &x0) in adv.data_mut().iter_mut().zip(x.data()) {
            *a = a.clamp(x0 - e, x0 + e);
        }
    }
    Ok(adv)
}

/// Adds white Gaussian noise rescaled so the measured SNR equals `snr_db`.
pub fn gaussian_perturb(x: &Tensor<f32>, snr_db: f64, seed: u64) -> Result<Tensor<f32>> {
    if snr_db == f64::INFINITY {
        return Ok(x.clone());
    }
    if !snr_db.is_finite() {
        return Err(Error::Config(format!("snr_db must be finite or +inf, got {snr_db}")));
    }
    let rms = x.rms();
    if rms == 0.0 {
        return Err(Error::Attack("cannot set an SNR against an all-zero input".into()));
    }
    let mut rng = rng::stream(seed, streams::GAUSSIAN_ATTACK);
    let noise: Vec<f64> = (0..x.numel()).map(|_| StandardNormal.sample(&mut rng)).collect();
    let noise_rms = (noise.iter().map(|v| v * v).sum::<f64>() / noise.len() as f64).sqrt();
    let scale = rms * 10f64.powf(-snr_db / 20.0) / noise_rms.max(f64::MIN_POSITIVE);
    let data = x.data().iter().zip(&noise).map(|(&v, &n)| (v as f64 + scale * n) as f32).collect();
    Ok(Tensor::new(x.shape().to_vec(), data)?)
}

/// One input to attack.
#[derive(Debug, Clone, Copy)]
pub struct AttackItem<'a> {
    pub id: &'a str,
    pub input: &'a Tensor<f32>,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackRow {
    pub id: String,
    pub label: usize,
    pub clean_pred: usize,
    /// Absent for items misclassified before the attack.
    pub adv_pred: Option<usize>,
    pub loss_before: f64,
    pub loss_after: Option<f64>,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSummary {
    pub kind: AttackKind,
    pub snr_db: Option<f64>,
    pub items: usize,
    pub correct: usize,
    pub flipped: usize,
    /// `flipped / correct`; `None` when nothing was classified correctly.
    pub asr: Option<f64>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackReport {
    pub rows: Vec<AttackRow>,
    pub summary: AttackSummary,
}

/// Attacks every correctly classified item and counts prediction flips.
pub fn attack_success_rate(model: &dyn Differentiable, items: &[AttackItem<'_>], cfg: &AttackConfig) -> Result<AttackReport> {
    cfg.validate()?;
    if items.is_empty() {
        return Err(Error::Attack("no items to attack".into()));
    }
    let rows: Vec<Result<(AttackRow, bool)>> = items
        .par_iter()
        .enumerate()
        .map(|(i, item)| attack_one(model, item, i, cfg).map_err(|e| with_item(e, item.id)))
        .collect();
    let mut out = Vec::with_capacity(items.len());
    let mut silent = 0;
    for r in rows {
        let (row, zero_input) = r?;
        silent += usize::from(zero_input);
        out.push(row);
    }
    let correct = out.iter().filter(|r| r.adv_pred.is_some()).count();
    let flipped = out.iter().filter(|r| r.adv_pred.is_some_and(|p| p != r.clean_pred)).count();
    let mut warnings = Vec::new();
    if silent > 0 {
        warnings.push(format!("{silent} item(s) are all zero; their budget is 0"));
    }
    if correct == 0 {
        warnings.push("no item was classified correctly; attack success rate is undefined".into());
    }
    Ok(AttackReport {
        rows: out,
        summary: AttackSummary {
            kind: cfg.kind,
            snr_db: cfg.snr_db.is_finite().then_some(cfg.snr_db),
            items: items.len(),
            correct,
            flipped,
            asr: (correct > 0).then(|| flipped as f64 / correct as f64),
            warnings,
        },
    })
}

fn with_item(e: Error, id: &str) -> Error {
    match e {
        Error::NonFiniteGradient { detail, .. } => Error::NonFiniteGradient { item: id.to_string(), detail },
        e => e,
    }
}

fn attack_one(model: &dyn Differentiable, item: &AttackItem<'_>, index: usize, cfg: &AttackConfig) -> Result<(AttackRow, bool)> {
    let (logits, loss_before) = model.evaluate(item.input, item.label)?;
    let clean_pred = argmax(&logits);
    let zero_input = item.input.rms() == 0.0;
    let eps = match cfg.epsilon_override {
        Some(e) => e,
        None => epsilon_for_snr(item.input, cfg.snr_db)?,
    };
    let mut row = AttackRow {
        id: item.id.to_string(),
        label: item.label,
        clean_pred,
        adv_pred: None,
        loss_before,
        loss_after: None,
        epsilon: eps,
    };
    if clean_pred != item.label {
        return Ok((row, zero_input));
    }
    let mut adv = match cfg.kind {
        AttackKind::Fgsm => fgsm(model, item.input, item.label, eps)?,
        AttackKind::Pgd => pgd(model, item.input, item.label, eps, cfg.pgd_step_ratio * eps, cfg.pgd_steps)?,
        AttackKind::Gaussian if eps == 0.0 => item.input.clone(),
        AttackKind::Gaussian => match cfg.epsilon_override {
            Some(e) => {
                let snr = 20.0 * (item.input.rms() / e).log10();
                gaussian_perturb(item.input, snr, cfg.seed.wrapping_add(index as u64))?
            }
            None => gaussian_perturb(item.input, cfg.snr_db, cfg.seed.wrapping_add(index as u64))?,
        },
    };
    if cfg.clip_unit {
        adv.data_mut().iter_mut().for_each(|v| *v = v.clamp(-1.0, 1.0));
    }
    let (adv_logits, loss_after) = model.evaluate(&adv, item.label)?;
    row.adv_pred = Some(argmax(&adv_logits));
    row.loss_after = Some(loss_after);
    Ok((row, zero_input))
}
