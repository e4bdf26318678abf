//! Supervised training of the head with Adam, best-validation-UAR model
//! selection and cross-validation over a fold plan.
//!
//! Utterances are processed one at a time (no padding); a batch sums the
//! per-utterance gradients in a fixed order and averages them, so results do
//! not depend on the thread count.

use std::borrow::Cow;
use std::collections::HashMap;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::{FoldPlan, Manifest, UtteranceRecord, SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::metrics::uar_of;
use crate::model::{frames_for_samples, head_forward, head_logits, HeadConfig, HeadParams};
use crate::rng::{self, streams};
use crate::tensor::{Scalar, Tape, Tensor, TensorError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Inputs longer than this are cut to their leading frames.
    pub max_audio_s: f64,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            learning_rate: 5e-4,
            max_epochs: 30,
            max_audio_s: 6.0,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl TrainConfig {
    /// Settings for the gender probe: as for emotion, but ten epochs.
    pub fn privacy_probe() -> Self {
        Self {
            max_epochs: 10,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.batch_size > 0
            && self.max_epochs > 0
            && self.learning_rate >= 0.0
            && self.learning_rate.is_finite()
            && self.max_audio_s > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.adam_eps > 0.0;
        if !ok || self.max_frames().is_none() {
            return Err(Error::Config(format!("invalid training settings {self:?}")));
        }
        Ok(())
    }

    /// Frame cap corresponding to `max_audio_s`.
    pub fn max_frames(&self) -> Option<usize> {
        let samples = (self.max_audio_s * SAMPLE_RATE as f64).round();
        if samples.is_finite() && samples >= 0.0 {
            frames_for_samples(samples as usize)
        } else {
            None
        }
    }
}

/// The label a record contributes under each task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Emotion,
    Gender,
}

impl Task {
    pub fn label(self, r: &UtteranceRecord) -> usize {
        match self {
            Task::Emotion => r.emotion.index(),
            Task::Gender => r.gender.index(),
        }
    }

    pub fn num_classes(self) -> usize {
        match self {
            Task::Emotion => 4,
            Task::Gender => 2,
        }
    }
}

/// One labelled utterance, borrowed from the caller.
#[derive(Debug, Clone, Copy)]
pub struct Example<'a> {
    pub id: &'a str,
    pub embedding: &'a Tensor<f32>,
    pub label: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_uar: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub params: HeadParams<f32>,
    pub history: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were kept.
    pub selected_epoch: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub label: usize,
    pub predicted: usize,
    pub logits: Vec<f32>,
}

/// History as one JSON object per line.
pub fn history_jsonl(history: &[EpochRecord]) -> String {
    history
        .iter()
        .map(|r| serde_json::to_string(r).expect("records serialize") + "\n")
        .collect()
}

/// Index of the largest logit; ties go to the lowest index.
pub fn argmax(logits: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in logits.iter().enumerate().skip(1) {
        if v > logits[best] {
            best = i;
        }
    }
    best
}

/// Keeps the leading `max_frames` frames of a `[L, T, D]` tensor.
pub fn truncate_frames(x: &Tensor<f32>, max_frames: usize) -> Cow<'_, Tensor<f32>> {
    let [l, t, d] = *x.shape() else {
        return Cow::Borrowed(x);
    };
    if t <= max_frames {
        return Cow::Borrowed(x);
    }
    let mut data = Vec::with_capacity(l * max_frames * d);
    for layer in 0..l {
        let base = layer * t * d;
        data.extend_from_slice(&x.data()[base..base + max_frames * d]);
    }
    Cow::Owned(Tensor::from_parts(vec![l, max_frames, d], data))
}

/// Cross-entropy loss of one example and its gradient for every parameter,
/// in [`HeadParams::NAMES`] order.
pub fn example_gradient(params: &HeadParams<f32>, ex: &Example<'_>, max_frames: usize) -> Result<(f64, Vec<Tensor<f32>>)> {
    let mut tape = Tape::new();
    let vars = params.record(&mut tape, true)?;
    let x = tape.constant(truncate_frames(ex.embedding, max_frames).into_owned())?;
    let logits = head_forward(&mut tape, &params.config, &vars, x)?;
    let loss = tape.cross_entropy(logits, ex.label)?;
    let value = tape.value(loss)?.item()?.as_f64();
    let grads = tape.backward(loss)?;
    let out = vars.all().iter().map(|&v| grads.wrt(v).cloned()).collect::<std::result::Result<Vec<_>, _>>()?;
    Ok((value, out))
}

/// Adam with bias correction; moments are kept in `f64`.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(cfg: &TrainConfig, params: &HeadParams<f32>) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors().iter().map(|t| vec![0.0; t.numel()]).collect();
        Self {
            lr: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.adam_eps,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// Applies one update from `grads` (one flat `f64` buffer per tensor).
    pub fn step(&mut self, params: &mut HeadParams<f32>, grads: &[Vec<f64>]) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for (((p, g), m), v) in params.tensors_mut().into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for (((p, &g), m), v) in p.data_mut().iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                let update = self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
                *p = (*p as f64 - update) as f32;
            }
        }
    }
}

fn check_examples(head: &HeadConfig, set: &[Example<'_>], what: &str) -> Result<()> {
    if set.is_empty() {
        return Err(Error::Config(format!("{what} set is empty")));
    }
    for ex in set {
        match ex.embedding.shape() {
            [l, t, d] if *l == head.layers && *d == head.dim && *t > 0 => {}
            s => {
                return Err(Error::Shape {
                    expected: format!("{} embedding [{}, T, {}] for {}", what, head.layers, head.dim, ex.id),
                    got: s.to_vec(),
                })
            }
        }
        if ex.label >= head.num_classes {
            return Err(Error::Config(format!(
                "{} has label {} but the head has {} classes",
                ex.id, ex.label, head.num_classes
            )));
        }
    }
    Ok(())
}

fn non_finite_as_loss(e: Error, epoch: usize, batch: usize) -> Error {
    match e {
        Error::Tensor(TensorError::NonFinite { .. }) => Error::NonFiniteLoss { epoch, batch },
        e => e,
    }
}

/// Trains a fresh head and returns the parameters of the best validation epoch.
pub fn train(cfg: &TrainConfig, head: &HeadConfig, train_set: &[Example<'_>], val_set: &[Example<'_>]) -> Result<TrainedModel> {
    cfg.validate()?;
    head.validate()?;
    check_examples(head, train_set, "training")?;
    check_examples(head, val_set, "validation")?;
    let max_frames = cfg.max_frames().expect("validated");

    let mut warnings = Vec::new();
    for c in 0..head.num_classes {
        if !train_set.iter().any(|e| e.label == c) {
            warnings.push(format!("class {c} has no training examples"));
        }
    }

    let mut params = HeadParams::<f32>::init(*head, cfg.seed)?;
    let mut adam = Adam::new(cfg, &params);
    let mut shuffle_rng = rng::stream(cfg.seed, streams::SHUFFLE);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let val_truth: Vec<usize> = val_set.iter().map(|e| e.label).collect();

    let mut history = Vec::with_capacity(cfg.max_epochs);
    let mut best: Option<(f64, usize, HeadParams<f32>)> = None;
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut losses = vec![0f64; train_set.len()];
        for (batch_no, batch) in order.chunks(cfg.batch_size).enumerate() {
            let results: Vec<Result<(f64, Vec<Tensor<f32>>)>> = batch
                .par_iter()
                .map(|&i| example_gradient(&params, &train_set[i], max_frames))
                .collect();
            let mut sum: Vec<Vec<f64>> = params.tensors().iter().map(|t| vec![0.0; t.numel()]).collect();
            for (&i, r) in batch.iter().zip(results) {
                let (loss, grads) = r.map_err(|e| non_finite_as_loss(e, epoch, batch_no))?;
                if !loss.is_finite() {
                    return Err(Error::NonFiniteLoss { epoch, batch: batch_no });
                }
                losses[i] = loss;
                for (acc, g) in sum.iter_mut().zip(&grads) {
                    for (a, &v) in acc.iter_mut().zip(g.data()) {
                        *a += v as f64;
                    }
                }
            }
            let scale = 1.0 / batch.len() as f64;
            for acc in &mut sum {
                acc.iter_mut().for_each(|a| *a *= scale);
            }
            adam.step(&mut params, &sum);
            if !params.tensors().iter().all(|t| t.is_finite()) {
                return Err(Error::NonFiniteLoss { epoch, batch: batch_no });
            }
        }
        let val_pred: Vec<usize> = predict_params(&params, val_set, max_frames)?.iter().map(|p| p.predicted).collect();
        let val_uar = uar_of(&val_truth, &val_pred, head.num_classes)?;
        history.push(EpochRecord {
            epoch,
            train_loss: losses.iter().sum::<f64>() / losses.len() as f64,
            val_uar,
        });
        if best.as_ref().is_none_or(|(b, _, _)| val_uar > *b) {
            best = Some((val_uar, epoch, params.clone()));
        }
    }
    let (_, selected_epoch, params) = best.expect("at least one epoch");
    Ok(TrainedModel {
        params,
        history,
        selected_epoch,
        warnings,
    })
}

fn predict_params(params: &HeadParams<f32>, set: &[Example<'_>], max_frames: usize) -> Result<Vec<Prediction>> {
    set.par_iter()
        .map(|ex| {
            let logits = head_logits(params, &truncate_frames(ex.embedding, max_frames))?.into_data();
            Ok(Prediction {
                id: ex.id.to_string(),
                label: ex.label,
                predicted: argmax(&logits),
                logits,
            })
        })
        .collect()
}

/// Predictions of `params` on `set`, in input order.
pub fn predict(params: &HeadParams<f32>, set: &[Example<'_>], max_audio_s: f64) -> Result<Vec<Prediction>> {
    let cfg = TrainConfig {
        max_audio_s,
        ..TrainConfig::default()
    };
    let max_frames = cfg
        .max_frames()
        .ok_or_else(|| Error::Config(format!("max_audio_s {max_audio_s} is shorter than one frame")))?;
    for ex in set {
        match ex.embedding.shape() {
            [l, _, d] if *l == params.config.layers && *d == params.config.dim => {}
            s => {
                return Err(Error::Shape {
                    expected: format!("[{}, T, {}] for {}", params.config.layers, params.config.dim, ex.id),
                    got: s.to_vec(),
                })
            }
        }
    }
    predict_params(params, set, max_frames)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossValidation {
    pub folds: Vec<TrainedModel>,
    /// One test prediction per manifest record, in manifest order.
    pub predictions: Vec<Prediction>,
    /// Fold that produced each entry of `predictions`.
    pub prediction_folds: Vec<usize>,
}

/// Trains one head per fold (seed `cfg.seed + fold`) and pools the test
/// predictions.
pub fn cross_validate(
    cfg: &TrainConfig,
    head: &HeadConfig,
    manifest: &Manifest,
    embeddings: &[Tensor<f32>],
    plan: &FoldPlan,
    task: Task,
) -> Result<CrossValidation> {
    plan.validate(manifest).map_err(|e| Error::FoldPlan(e.to_string()))?;
    if embeddings.len() != manifest.len() {
        return Err(Error::Config(format!(
            "{} embeddings for {} manifest records",
            embeddings.len(),
            manifest.len()
        )));
    }
    let index = manifest.index();
    let examples = |ids: &[String]| -> Vec<Example<'_>> {
        ids.iter()
            .map(|id| {
                let i = index[id.as_str()];
                Example {
                    id: &manifest.records[i].id,
                    embedding: &embeddings[i],
                    label: task.label(&manifest.records[i]),
                }
            })
            .collect()
    };

    let results: Vec<Result<(TrainedModel, Vec<Prediction>)>> = plan
        .folds
        .par_iter()
        .enumerate()
        .map(|(f, fold)| {
            let fold_cfg = TrainConfig {
                seed: cfg.seed.wrapping_add(f as u64),
                ..*cfg
            };
            let model = train(&fold_cfg, head, &examples(&fold.train), &examples(&fold.val))?;
            let preds = predict(&model.params, &examples(&fold.test), cfg.max_audio_s)?;
            Ok((model, preds))
        })
        .collect();

    let mut folds = Vec::with_capacity(results.len());
    let mut pooled: HashMap<String, (usize, Prediction)> = HashMap::new();
    for (f, r) in results.into_iter().enumerate() {
        let (model, preds) = r?;
        folds.push(model);
        for p in preds {
            pooled.insert(p.id.clone(), (f, p));
        }
    }
    let mut predictions = Vec::with_capacity(manifest.len());
    let mut prediction_folds = Vec::with_capacity(manifest.len());
    for r in &manifest.records {
        let (f, p) = pooled.remove(&r.id).expect("validated plan covers every record");
        predictions.push(p);
        prediction_folds.push(f);
    }
    Ok(CrossValidation {
        folds,
        predictions,
        prediction_folds,
    })
}
