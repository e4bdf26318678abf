//! Trust-axis measurements: recall, group fairness, the gender privacy probe
//! and analytic inference cost.
//!
//! Everything here returns fractions except the fairness scores, which are
//! reported in percent.

mod flops;
mod privacy;

pub use flops::{flops_count, head_flops, linear_flops, BackboneCost, FlopsBreakdown, DEFAULT_DURATION_S};
pub use privacy::{privacy_probe, ProbeResult};

use crate::dataio::Gender;
use crate::error::{Error, Result};

/// True label, predicted label and protected group for each item.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedPredictions {
    num_classes: usize,
    truth: Vec<usize>,
    pred: Vec<usize>,
    group: Vec<Gender>,
}

impl GroupedPredictions {
    pub fn new(num_classes: usize, truth: Vec<usize>, pred: Vec<usize>, group: Vec<Gender>) -> Result<Self> {
        if truth.len() != pred.len() || truth.len() != group.len() {
            return Err(Error::Metric(format!(
                "length mismatch: {} truths, {} predictions, {} groups",
                truth.len(),
                pred.len(),
                group.len()
            )));
        }
        if let Some(bad) = truth.iter().chain(&pred).find(|&&c| c >= num_classes) {
            return Err(Error::Metric(format!("label {bad} outside {num_classes} classes")));
        }
        Ok(Self {
            num_classes,
            truth,
            pred,
            group,
        })
    }

    pub fn len(&self) -> usize {
        self.truth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.truth.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn truth(&self) -> &[usize] {
        &self.truth
    }

    pub fn pred(&self) -> &[usize] {
        &self.pred
    }

    pub fn group(&self) -> &[Gender] {
        &self.group
    }

    /// Classes with no true instance; [`uar`] leaves them out.
    pub fn absent_classes(&self) -> Vec<usize> {
        (0..self.num_classes).filter(|c| !self.truth.contains(c)).collect()
    }

    /// Classes whose equality-of-odds term is undefined in some group and is
    /// therefore skipped.
    pub fn undefined_odds_classes(&self) -> Vec<usize> {
        let cells = self.cells();
        (0..self.num_classes)
            .filter(|&c| present_in_truth(&cells, c) && class_rates(&cells, c).is_none())
            .collect()
    }

    /// Counts indexed `[group][truth][pred]`.
    fn cells(&self) -> Vec<Vec<Vec<usize>>> {
        let c = self.num_classes;
        let mut cells = vec![vec![vec![0usize; c]; c]; 2];
        for ((&g, &t), &p) in self.group.iter().zip(&self.truth).zip(&self.pred) {
            cells[g.index()][t][p] += 1;
        }
        cells
    }

    fn group_sizes(&self) -> [usize; 2] {
        let mut n = [0; 2];
        for g in &self.group {
            n[g.index()] += 1;
        }
        n
    }

    fn require_both_groups(&self) -> Result<()> {
        let n = self.group_sizes();
        for g in Gender::ALL {
            if n[g.index()] == 0 {
                return Err(Error::Metric(format!("group {g} is empty")));
            }
        }
        Ok(())
    }
}

fn present_in_truth(cells: &[Vec<Vec<usize>>], c: usize) -> bool {
    cells.iter().any(|g| g[c].iter().sum::<usize>() > 0)
}

/// `(TPR, FPR)` of class `c` against the rest, per group, or `None` when a
/// rate has no denominator in either group.
fn class_rates(cells: &[Vec<Vec<usize>>], c: usize) -> Option<[(f64, f64); 2]> {
    let mut out = [(0.0, 0.0); 2];
    for (g, m) in cells.iter().enumerate() {
        let pos: usize = m[c].iter().sum();
        let tp = m[c][c];
        let neg: usize = m.iter().enumerate().filter(|&(t, _)| t != c).map(|(_, row)| row.iter().sum::<usize>()).sum();
        let fp: usize = m.iter().enumerate().filter(|&(t, _)| t != c).map(|(_, row)| row[c]).sum();
        if pos == 0 || neg == 0 {
            return None;
        }
        out[g] = (tp as f64 / pos as f64, fp as f64 / neg as f64);
    }
    Some(out)
}

/// Mean per-class recall over the classes present in `truth`.
pub fn uar_of(truth: &[usize], pred: &[usize], num_classes: usize) -> Result<f64> {
    if truth.is_empty() {
        return Err(Error::Metric("recall of an empty set".into()));
    }
    if truth.len() != pred.len() {
        return Err(Error::Metric(format!("{} truths but {} predictions", truth.len(), pred.len())));
    }
    let mut hits = vec![0usize; num_classes];
    let mut support = vec![0usize; num_classes];
    for (&t, &p) in truth.iter().zip(pred) {
        if t >= num_classes || p >= num_classes {
            return Err(Error::Metric(format!("label outside {num_classes} classes")));
        }
        support[t] += 1;
        hits[t] += usize::from(t == p);
    }
    let recalls: Vec<f64> = support
        .iter()
        .zip(&hits)
        .filter(|(&s, _)| s > 0)
        .map(|(&s, &h)| h as f64 / s as f64)
        .collect();
    Ok(recalls.iter().sum::<f64>() / recalls.len() as f64)
}

/// Unweighted average recall in `[0, 1]`.
pub fn uar(preds: &GroupedPredictions) -> Result<f64> {
    uar_of(&preds.truth, &preds.pred, preds.num_classes)
}

/// Fraction of exact matches.
pub fn accuracy(truth: &[usize], pred: &[usize]) -> Result<f64> {
    if truth.is_empty() || truth.len() != pred.len() {
        return Err(Error::Metric("accuracy needs equal, non-empty label lists".into()));
    }
    let hits = truth.iter().zip(pred).filter(|(t, p)| t == p).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Equality of odds, in percent.
///
/// For each class `c` taken one-vs-rest, the gap between groups is
/// `(|ΔTPR_c| + |ΔFPR_c|) / 2`; the score is 100 times the mean gap over
/// classes present in the truth labels. Classes whose rates are undefined
/// for a group are skipped (see
/// [`GroupedPredictions::undefined_odds_classes`]).
pub fn equality_of_odds(preds: &GroupedPredictions) -> Result<f64> {
    preds.require_both_groups()?;
    let cells = preds.cells();
    let gaps: Vec<f64> = (0..preds.num_classes)
        .filter_map(|c| class_rates(&cells, c))
        .map(|[(tf, ff), (tm, fm)]| ((tf - tm).abs() + (ff - fm).abs()) / 2.0)
        .collect();
    if gaps.is_empty() {
        return Err(Error::Metric("no class has defined rates in both groups".into()));
    }
    Ok(100.0 * gaps.iter().sum::<f64>() / gaps.len() as f64)
}

/// Statistical parity, in percent: 100 times the mean over all classes of
/// `|P(ŷ = c | female) − P(ŷ = c | male)|`.
pub fn statistical_parity(preds: &GroupedPredictions) -> Result<f64> {
    preds.require_both_groups()?;
    let n = preds.group_sizes();
    let mut counts = vec![[0usize; 2]; preds.num_classes];
    for (&g, &p) in preds.group.iter().zip(&preds.pred) {
        counts[p][g.index()] += 1;
    }
    let total: f64 = counts
        .iter()
        .map(|[f, m]| (*f as f64 / n[0] as f64 - *m as f64 / n[1] as f64).abs())
        .sum();
    Ok(100.0 * total / preds.num_classes as f64)
}
