//! The five pipeline stages. Each reads its inputs from the run directory
//! (or the configured manifest) and writes its artifacts beneath it.
//!
//! ```text
//! <out>/config.toml              echoed configuration
//! <out>/run_meta.json            command and wall-clock start time
//! <out>/data/manifest.jsonl      synth
//! <out>/data/tensors/*.tsrb
//! <out>/train/folds.json         train
//! <out>/train/fold_<k>/          head bundle and history.jsonl
//! <out>/train/predictions.jsonl
//! <out>/train/metrics.json
//! <out>/attack/report.jsonl      attack
//! <out>/attack/summary.json
//! <out>/eval/metrics.json        eval (a RunReport)
//! <out>/eval/details.json
//! <out>/profile/profile.json     profile
//! <out>/profile/radar.svg
//! ```

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use trustprobe::attacks::{attack_success_rate, AttackItem, AttackKind, AttackRow, AttackSurface, Differentiable, EncoderHead, HeadModel};
use trustprobe::dataio::{make_folds, synth_dataset, write_dataset, FoldPlan, SAMPLE_RATE};
use trustprobe::metrics::{equality_of_odds, flops_count, privacy_probe, statistical_parity, uar, BackboneCost, FlopsBreakdown, GroupedPredictions, DEFAULT_DURATION_S};
use trustprobe::model::{load_head, save_head, HeadParams};
use trustprobe::profile::{build_profile, emit_json, emit_radar_svg, normalize, RunReport, SvgStyle};
use trustprobe::training::{cross_validate, history_jsonl, truncate_frames, Task, TrainConfig};
use trustprobe::Tensor;

use crate::error::CliError;
use crate::run::{read_json, read_jsonl, write_file, write_json, write_jsonl, Corpus, Run};

pub const PRIVACY_MAX_EPOCHS: usize = 10;

fn fold_dir(run: &Run, fold: usize) -> PathBuf {
    run.path(&format!("train/fold_{fold}"))
}

pub fn cmd_synth(run: &Run) -> Result<String, CliError> {
    let section = run
        .config
        .data
        .synth
        .as_ref()
        .ok_or_else(|| CliError::Config("synth needs a [data.synth] section".into()))?;
    let spec = section.to_spec(run.seed())?;
    run.begin("synth")?;
    let data = synth_dataset(&spec)?;
    let dir = run.path("data");
    if dir.join("tensors").exists() {
        std::fs::remove_dir_all(dir.join("tensors")).map_err(|e| crate::run::io_err(&dir, e))?;
    }
    let manifest = write_dataset(&dir, &data)?;
    Ok(format!("synth: wrote {} utterances to {}", manifest.len(), dir.display()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionRecord {
    pub id: String,
    pub fold: usize,
    pub label: usize,
    pub predicted: usize,
    pub logits: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FoldSummary {
    pub fold: usize,
    pub train_items: usize,
    pub val_items: usize,
    pub test_items: usize,
    pub selected_epoch: usize,
    pub best_val_uar: f64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainMetrics {
    pub uar_percent: f64,
    pub items: usize,
    pub folds: Vec<FoldSummary>,
}

pub fn cmd_train(run: &Run) -> Result<String, CliError> {
    let corpus = Corpus::load(run)?;
    run.begin("train")?;
    let head = corpus.head_config(run.config.model.fc_hidden)?;
    let folds = &run.config.folds;
    let plan = make_folds(&corpus.manifest, folds.scheme, folds.k, folds.val_policy(), run.seed())?;
    let cv = cross_validate(&run.config.train, &head, &corpus.manifest, &corpus.embeddings, &plan, Task::Emotion)
        .map_err(|e| CliError::engine(CliError::Train, e))?;

    let train_dir = run.path("train");
    if train_dir.exists() {
        std::fs::remove_dir_all(&train_dir).map_err(|e| crate::run::io_err(&train_dir, e))?;
    }
    write_json(&run.path("train/folds.json"), &plan)?;
    let mut summaries = Vec::with_capacity(cv.folds.len());
    for (f, (model, fold)) in cv.folds.iter().zip(&plan.folds).enumerate() {
        let dir = fold_dir(run, f);
        save_head(&dir, &model.params).map_err(|e| CliError::engine(CliError::Io, e))?;
        write_file(&dir.join("history.jsonl"), history_jsonl(&model.history).as_bytes())?;
        summaries.push(FoldSummary {
            fold: f,
            train_items: fold.train.len(),
            val_items: fold.val.len(),
            test_items: fold.test.len(),
            selected_epoch: model.selected_epoch,
            best_val_uar: model.history[model.selected_epoch - 1].val_uar,
            warnings: model.warnings.clone(),
        });
    }
    let records: Vec<PredictionRecord> = cv
        .predictions
        .iter()
        .zip(&cv.prediction_folds)
        .map(|(p, &fold)| PredictionRecord {
            id: p.id.clone(),
            fold,
            label: p.label,
            predicted: p.predicted,
            logits: p.logits.clone(),
        })
        .collect();
    write_jsonl(&run.path("train/predictions.jsonl"), &records)?;
    let truth: Vec<usize> = records.iter().map(|r| r.label).collect();
    let pred: Vec<usize> = records.iter().map(|r| r.predicted).collect();
    let pooled = trustprobe::metrics::uar_of(&truth, &pred, 4).map_err(|e| CliError::engine(CliError::Metric, e))?;
    let metrics = TrainMetrics {
        uar_percent: 100.0 * pooled,
        items: records.len(),
        folds: summaries,
    };
    write_json(&run.path("train/metrics.json"), &metrics)?;
    Ok(format!("train: {} folds, pooled UAR {:.2}%", plan.folds.len(), metrics.uar_percent))
}

fn load_plan(run: &Run) -> Result<FoldPlan, CliError> {
    let path = run.path("train/folds.json");
    if !path.is_file() {
        return Err(CliError::Data(format!("{} not found; run train first", path.display())));
    }
    read_json(&path)
}

fn load_fold_heads(run: &Run, plan: &FoldPlan) -> Result<Vec<HeadParams<f32>>, CliError> {
    (0..plan.folds.len())
        .map(|f| load_head(fold_dir(run, f)).map_err(|e| CliError::engine(CliError::Data, e)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackRecord {
    pub fold: usize,
    #[serde(flatten)]
    pub row: AttackRow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackTotals {
    pub kind: AttackKind,
    pub surface: AttackSurface,
    pub snr_db: Option<f64>,
    pub items: usize,
    pub correct: usize,
    pub flipped: usize,
    /// `flipped / correct`, absent when nothing was classified correctly.
    pub asr: Option<f64>,
    pub warnings: Vec<String>,
}

pub fn cmd_attack(run: &Run) -> Result<String, CliError> {
    let cfg = run.config.attack;
    let corpus = Corpus::load(run)?;
    let plan = load_plan(run)?;
    let heads = load_fold_heads(run, &plan)?;
    if cfg.surface == AttackSurface::Waveform && corpus.encoder.is_none() {
        return Err(CliError::Config("attack.surface = \"waveform\" needs waveform data and [model.encoder]".into()));
    }
    run.begin("attack")?;
    let max_frames = run.config.train.max_frames().ok_or_else(|| CliError::Config("train.max_audio_s is shorter than one frame".into()))?;
    let max_samples = (run.config.train.max_audio_s * SAMPLE_RATE as f64).round() as usize;
    let index = corpus.manifest.index();

    let mut records = Vec::new();
    let mut warnings = Vec::new();
    let mut offset = 0u64;
    for (f, (fold, params)) in plan.folds.iter().zip(&heads).enumerate() {
        let rows: Vec<usize> = fold.test.iter().map(|id| index[id.as_str()]).collect();
        let inputs: Vec<Tensor<f32>> = rows
            .iter()
            .map(|&i| match cfg.surface {
                AttackSurface::Embedding => truncate_frames(&corpus.embeddings[i], max_frames).into_owned(),
                AttackSurface::Waveform => {
                    let w = &corpus.raw[i];
                    let n = w.numel().min(max_samples);
                    Tensor::new(vec![n], w.data()[..n].to_vec()).expect("length matches")
                }
            })
            .collect();
        let items: Vec<AttackItem> = rows
            .iter()
            .zip(&inputs)
            .map(|(&i, input)| AttackItem {
                id: &corpus.manifest.records[i].id,
                input,
                label: corpus.manifest.records[i].emotion.index(),
            })
            .collect();
        let head_model = HeadModel { params };
        let chain;
        let model: &dyn Differentiable = match (&corpus.encoder, cfg.surface) {
            (Some(encoder), AttackSurface::Waveform) => {
                chain = EncoderHead { encoder, params };
                &chain
            }
            _ => &head_model,
        };
        // Gaussian seeds follow the item's position in the pooled report.
        let fold_cfg = trustprobe::attacks::AttackConfig {
            seed: cfg.seed.wrapping_add(offset),
            ..cfg
        };
        let report = attack_success_rate(model, &items, &fold_cfg).map_err(|e| CliError::engine(CliError::Attack, e))?;
        offset += items.len() as u64;
        warnings.extend(report.summary.warnings.iter().map(|w| format!("fold {f}: {w}")));
        records.extend(report.rows.into_iter().map(|row| AttackRecord { fold: f, row }));
    }
    let correct = records.iter().filter(|r| r.row.adv_pred.is_some()).count();
    let flipped = records.iter().filter(|r| r.row.adv_pred.is_some_and(|p| p != r.row.clean_pred)).count();
    let totals = AttackTotals {
        kind: cfg.kind,
        surface: cfg.surface,
        snr_db: cfg.snr_db.is_finite().then_some(cfg.snr_db),
        items: records.len(),
        correct,
        flipped,
        asr: (correct > 0).then(|| flipped as f64 / correct as f64),
        warnings,
    };
    write_jsonl(&run.path("attack/report.jsonl"), &records)?;
    write_json(&run.path("attack/summary.json"), &totals)?;
    let asr = totals.asr.map_or("undefined".to_string(), |a| format!("{:.2}%", 100.0 * a));
    Ok(format!("attack: {} of {} correct items flipped, ASR {asr}", flipped, correct))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalDetails {
    pub items: usize,
    pub absent_classes: Vec<usize>,
    pub undefined_odds_classes: Vec<usize>,
    pub privacy_max_epochs: usize,
    pub flops_duration_s: f64,
    pub flops: FlopsBreakdown,
    pub attack: Option<AttackTotals>,
    pub warnings: Vec<String>,
}

pub fn cmd_eval(run: &Run) -> Result<String, CliError> {
    let corpus = Corpus::load(run)?;
    let plan = load_plan(run)?;
    let pred_path = run.path("train/predictions.jsonl");
    if !pred_path.is_file() {
        return Err(CliError::Data(format!("{} not found; run train first", pred_path.display())));
    }
    let preds: Vec<PredictionRecord> = read_jsonl(&pred_path)?;
    run.begin("eval")?;
    let by_id: std::collections::HashMap<&str, &PredictionRecord> = preds.iter().map(|p| (p.id.as_str(), p)).collect();
    let mut truth = Vec::with_capacity(corpus.manifest.len());
    let mut pred = Vec::with_capacity(corpus.manifest.len());
    let mut group = Vec::with_capacity(corpus.manifest.len());
    for r in &corpus.manifest.records {
        let p = by_id
            .get(r.id.as_str())
            .ok_or_else(|| CliError::Data(format!("no prediction for {}", r.id)))?;
        truth.push(r.emotion.index());
        pred.push(p.predicted);
        group.push(r.gender);
    }
    let grouped = GroupedPredictions::new(4, truth, pred, group).map_err(|e| CliError::engine(CliError::Metric, e))?;
    let mut warnings = Vec::new();
    let eo = match equality_of_odds(&grouped) {
        Ok(v) => Some(v),
        Err(e) => {
            warnings.push(format!("equality of odds: {e}"));
            None
        }
    };
    let sp = match statistical_parity(&grouped) {
        Ok(v) => Some(v),
        Err(e) => {
            warnings.push(format!("statistical parity: {e}"));
            None
        }
    };

    let head = load_head(fold_dir(run, 0)).map_err(|e| CliError::engine(CliError::Data, e))?.config;
    let probe_cfg = TrainConfig {
        max_epochs: PRIVACY_MAX_EPOCHS,
        ..run.config.train
    };
    let probe = privacy_probe(&probe_cfg, &head, &corpus.manifest, &corpus.embeddings, &plan).map_err(|e| CliError::engine(CliError::Metric, e))?;

    let backbone = match (&run.config.model.encoder, run.config.model.backbone_flops) {
        (_, Some(flops)) => BackboneCost::Declared { flops },
        (Some(e), None) => BackboneCost::ToyEncoder { config: e.config(run.seed()) },
        (None, None) => BackboneCost::None,
    };
    let flops = flops_count(&head, &backbone, DEFAULT_DURATION_S).map_err(|e| CliError::engine(CliError::Metric, e))?;

    let attack_path = run.path("attack/summary.json");
    let attack: Option<AttackTotals> = if attack_path.is_file() { Some(read_json(&attack_path)?) } else { None };
    if attack.is_none() {
        warnings.push("no attack summary; safety axis left empty".into());
    }
    let report = RunReport {
        model_name: run.config.model.name.clone(),
        uar_percent: Some(100.0 * uar(&grouped).map_err(|e| CliError::engine(CliError::Metric, e))?),
        gender_accuracy_percent: Some(probe.accuracy_percent),
        asr_percent: attack.as_ref().and_then(|a| a.asr).map(|a| 100.0 * a),
        equality_of_odds_percent: eo,
        statistical_parity_percent: sp,
        flops: Some(flops.total() as f64),
    };
    let details = EvalDetails {
        items: grouped.len(),
        absent_classes: grouped.absent_classes(),
        undefined_odds_classes: grouped.undefined_odds_classes(),
        privacy_max_epochs: PRIVACY_MAX_EPOCHS,
        flops_duration_s: DEFAULT_DURATION_S,
        flops,
        attack,
        warnings,
    };
    write_json(&run.path("eval/metrics.json"), &report)?;
    write_json(&run.path("eval/details.json"), &details)?;
    Ok(format!(
        "eval: UAR {:.2}%, gender probe {:.2}%, FLOPs {}",
        report.uar_percent.unwrap_or(f64::NAN),
        probe.accuracy_percent,
        flops.total()
    ))
}

/// Renders `reports` (default: this run's eval report) as one comparison.
pub fn cmd_profile(run: &Run, reports: &[PathBuf]) -> Result<String, CliError> {
    let default = [run.path("eval/metrics.json")];
    let paths: &[PathBuf] = if reports.is_empty() { &default } else { reports };
    let mut profiles = Vec::with_capacity(paths.len());
    for path in paths {
        let report: RunReport = read_json(path)?;
        profiles.push(build_profile(&report, &path.display().to_string()).map_err(|e| CliError::engine(CliError::Profile, e))?);
    }
    run.begin("profile")?;
    let specs = run.config.profile.specs();
    let normalized = normalize(&profiles, &specs).map_err(|e| CliError::engine(CliError::Profile, e))?;
    let doc = emit_json(&profiles, &specs, &normalized).map_err(|e| CliError::engine(CliError::Profile, e))?;
    let names: Vec<&str> = specs.iter().map(|s| s.axis.name()).collect();
    let style = SvgStyle {
        title: run.config.profile.title.clone(),
        ..SvgStyle::default()
    };
    let svg = emit_radar_svg(&names, &normalized, &style).map_err(|e| CliError::engine(CliError::Profile, e))?;
    write_file(&run.path("profile/profile.json"), doc.as_bytes())?;
    write_file(&run.path("profile/radar.svg"), svg.as_bytes())?;
    Ok(format!("profile: {} model(s) rendered to {}", profiles.len(), run.path("profile").display()))
}
