//! Five-axis trust profiles: assembly from metric reports, normalization to
//! radial scores, and rendering.
//!
//! Performance is a forward axis (higher raw is better). Privacy, safety,
//! fairness and sustainability are backward: a lower gender accuracy, attack
//! success rate, fairness gap or operation count earns a larger radius.

mod document;
mod svg;

pub use document::{emit_json, load_profile_document, ProfileDocument, ProfileEntry, SCHEMA_VERSION};
pub use svg::{emit_radar_svg, SvgStyle};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Axis {
    Performance,
    Privacy,
    Safety,
    Fairness,
    Sustainability,
}

impl Axis {
    pub const ALL: [Axis; 5] = [Axis::Performance, Axis::Privacy, Axis::Safety, Axis::Fairness, Axis::Sustainability];

    pub fn name(self) -> &'static str {
        match self {
            Axis::Performance => "performance",
            Axis::Privacy => "privacy",
            Axis::Safety => "safety",
            Axis::Fairness => "fairness",
            Axis::Sustainability => "sustainability",
        }
    }

    pub fn direction(self) -> Direction {
        match self {
            Axis::Performance => Direction::Forward,
            _ => Direction::Backward,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    Forward,
    Backward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scaling {
    /// `(v − min) / (max − min)` over the profiles being compared. Falls back
    /// to linear [`Scaling::Absolute`] with the spec bounds when there is one
    /// profile or every value is equal.
    CohortMinMax,
    /// `clamp((v − lo) / (hi − lo), 0, 1)`.
    Absolute,
    /// As [`Scaling::Absolute`] after `log10` of `v`, `lo` and `hi`.
    LogAbsolute,
}

/// How one axis maps raw values to a radius in `[0, 1]`. `lo` and `hi` are
/// in raw units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisSpec {
    pub axis: Axis,
    pub direction: Direction,
    pub scaling: Scaling,
    pub lo: f64,
    pub hi: f64,
}

impl AxisSpec {
    /// Default bounds: performance 25–100 (four-class chance to perfect),
    /// privacy 50–100 (binary chance to perfect), safety 0–100, fairness
    /// 0–50, and operations 10⁹–10¹¹ on a log scale.
    pub fn default_for(axis: Axis) -> Self {
        let (scaling, lo, hi) = match axis {
            Axis::Performance => (Scaling::Absolute, 25.0, 100.0),
            Axis::Privacy => (Scaling::Absolute, 50.0, 100.0),
            Axis::Safety => (Scaling::Absolute, 0.0, 100.0),
            Axis::Fairness => (Scaling::Absolute, 0.0, 50.0),
            Axis::Sustainability => (Scaling::LogAbsolute, 1e9, 1e11),
        };
        Self {
            axis,
            direction: axis.direction(),
            scaling,
            lo,
            hi,
        }
    }

    pub fn defaults() -> Vec<AxisSpec> {
        Axis::ALL.iter().map(|&a| Self::default_for(a)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo < self.hi) {
            return Err(Error::AxisSpec(format!("{}: need lo < hi, got {} and {}", self.axis.name(), self.lo, self.hi)));
        }
        if self.scaling == Scaling::LogAbsolute && self.lo <= 0.0 {
            return Err(Error::AxisSpec(format!("{}: log scaling needs lo > 0", self.axis.name())));
        }
        Ok(())
    }

    fn absolute(&self, v: f64, log: bool) -> f64 {
        let (v, lo, hi) = if log {
            (v.max(f64::MIN_POSITIVE).log10(), self.lo.log10(), self.hi.log10())
        } else {
            (v, self.lo, self.hi)
        };
        ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
    }

    fn orient(&self, s: f64) -> f64 {
        match self.direction {
            Direction::Forward => s,
            Direction::Backward => 1.0 - s,
        }
    }
}

/// Raw axis values for one model. Percentages are in `[0, 100]`;
/// sustainability is an operation count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrustProfile {
    pub model_name: String,
    pub performance: f64,
    pub privacy: f64,
    pub safety: f64,
    pub fairness: f64,
    pub sustainability: f64,
}

impl TrustProfile {
    pub fn value(&self, axis: Axis) -> f64 {
        match axis {
            Axis::Performance => self.performance,
            Axis::Privacy => self.privacy,
            Axis::Safety => self.safety,
            Axis::Fairness => self.fairness,
            Axis::Sustainability => self.sustainability,
        }
    }
}

/// The evaluation summary of one model, as written by the `eval` stage.
/// Missing measurements are `None`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunReport {
    pub model_name: String,
    #[serde(default)]
    pub uar_percent: Option<f64>,
    #[serde(default)]
    pub gender_accuracy_percent: Option<f64>,
    #[serde(default)]
    pub asr_percent: Option<f64>,
    #[serde(default)]
    pub equality_of_odds_percent: Option<f64>,
    #[serde(default)]
    pub statistical_parity_percent: Option<f64>,
    #[serde(default)]
    pub flops: Option<f64>,
}

/// Copies the five axis values out of a report. `context` names the report
/// in errors.
pub fn build_profile(report: &RunReport, context: &str) -> Result<TrustProfile> {
    let need = |v: Option<f64>, axis: Axis| -> Result<f64> {
        let v = v.ok_or_else(|| Error::MissingAxis {
            axis: axis.name().into(),
            context: context.into(),
        })?;
        let ok = match axis {
            Axis::Sustainability => v > 0.0 && v.is_finite(),
            _ => (0.0..=100.0).contains(&v),
        };
        if !ok {
            return Err(Error::AxisSpec(format!("{context}: {} value {v} is out of range", axis.name())));
        }
        Ok(v)
    };
    Ok(TrustProfile {
        model_name: report.model_name.clone(),
        performance: need(report.uar_percent, Axis::Performance)?,
        privacy: need(report.gender_accuracy_percent, Axis::Privacy)?,
        safety: need(report.asr_percent, Axis::Safety)?,
        fairness: need(report.equality_of_odds_percent, Axis::Fairness)?,
        sustainability: need(report.flops, Axis::Sustainability)?,
    })
}

/// Radial scores of one model, in the order of the axis specs used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedProfile {
    pub model_name: String,
    pub scores: Vec<f64>,
}

/// Radial scores in `[0, 1]` for every profile along every spec'd axis.
pub fn normalize(profiles: &[TrustProfile], specs: &[AxisSpec]) -> Result<Vec<NormalizedProfile>> {
    if profiles.is_empty() {
        return Err(Error::AxisSpec("no profiles to normalize".into()));
    }
    for s in specs {
        s.validate()?;
    }
    let mut out: Vec<NormalizedProfile> = profiles
        .iter()
        .map(|p| NormalizedProfile {
            model_name: p.model_name.clone(),
            scores: Vec::with_capacity(specs.len()),
        })
        .collect();
    for spec in specs {
        let values: Vec<f64> = profiles.iter().map(|p| p.value(spec.axis)).collect();
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for (entry, &v) in out.iter_mut().zip(&values) {
            let s = match spec.scaling {
                Scaling::CohortMinMax if max > min => (v - min) / (max - min),
                Scaling::CohortMinMax | Scaling::Absolute => spec.absolute(v, false),
                Scaling::LogAbsolute => spec.absolute(v, true),
            };
            entry.scores.push(spec.orient(s));
        }
    }
    Ok(out)
}
