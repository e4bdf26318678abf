//! Gender-inference probe: how well a head of the same architecture recovers
//! speaker gender from the embeddings.

use serde::{Deserialize, Serialize};

use crate::dataio::{FoldPlan, Gender, Manifest};
use crate::error::{Error, Result};
use crate::model::HeadConfig;
use crate::tensor::Tensor;
use crate::training::{cross_validate, Prediction, Task, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub accuracy_percent: f64,
    pub predictions: Vec<Prediction>,
}

/// Cross-validated gender accuracy in percent; higher means more leakage.
///
/// `head` supplies the layer count, dimension and hidden width; the class
/// count is forced to two.
pub fn privacy_probe(
    cfg: &TrainConfig,
    head: &HeadConfig,
    manifest: &Manifest,
    embeddings: &[Tensor<f32>],
    plan: &FoldPlan,
) -> Result<ProbeResult> {
    for g in Gender::ALL {
        if !manifest.records.iter().any(|r| r.gender == g) {
            return Err(Error::Metric(format!("no {g} speakers; gender probe needs both groups")));
        }
    }
    let probe_head = HeadConfig {
        num_classes: 2,
        ..*head
    };
    let cv = cross_validate(cfg, &probe_head, manifest, embeddings, plan, Task::Gender)?;
    let correct = cv.predictions.iter().filter(|p| p.predicted == p.label).count();
    Ok(ProbeResult {
        accuracy_percent: 100.0 * correct as f64 / cv.predictions.len() as f64,
        predictions: cv.predictions,
    })
}
