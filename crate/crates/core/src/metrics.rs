//! Corr / F1 / Acc-2 / MAE and drop arithmetic.
//!
//! Binary metrics split at zero: negative (< 0) versus non-negative (>= 0).
//! F1 is the support-weighted average over the two gold classes, scaled to
//! [0, 100]; a class whose precision and recall are both zero scores 0.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Corr,
    F1,
    Acc2,
    Mae,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Corr, Metric::F1, Metric::Acc2, Metric::Mae];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Corr => "corr",
            Metric::F1 => "f1",
            Metric::Acc2 => "acc2",
            Metric::Mae => "mae",
        }
    }

    /// Whether a larger value is better (drops are oriented accordingly).
    pub fn higher_is_better(self) -> bool {
        !matches!(self, Metric::Mae)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub corr: f64,
    pub f1: f64,
    pub acc2: f64,
    pub mae: f64,
    pub n: usize,
}

impl MetricSet {
    pub fn evaluate(pred: &[f64], gold: &[f64]) -> Result<Self> {
        let corr = pearson_corr(pred, gold)?;
        let f1 = binary_f1(pred, gold)?;
        let (mae, acc2) = mae_acc2(pred, gold)?;
        Ok(Self {
            corr,
            f1,
            acc2,
            mae,
            n: pred.len(),
        })
    }

    pub fn get(&self, m: Metric) -> f64 {
        match m {
            Metric::Corr => self.corr,
            Metric::F1 => self.f1,
            Metric::Acc2 => self.acc2,
            Metric::Mae => self.mae,
        }
    }
}

/// Per-metric degradation; positive means the perturbation hurt.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricDrop {
    pub corr: f64,
    pub f1: f64,
    pub acc2: f64,
    pub mae: f64,
}

impl MetricDrop {
    pub fn get(&self, m: Metric) -> f64 {
        match m {
            Metric::Corr => self.corr,
            Metric::F1 => self.f1,
            Metric::Acc2 => self.acc2,
            Metric::Mae => self.mae,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DropReport {
    pub clean: MetricSet,
    pub perturbed: MetricSet,
    pub drop: MetricDrop,
}

fn same_len(pred: &[f64], gold: &[f64]) -> Result<()> {
    if pred.len() != gold.len() {
        return Err(Error::contract(format!(
            "prediction and gold lengths differ ({} vs {})",
            pred.len(),
            gold.len()
        )));
    }
    Ok(())
}

pub fn pearson_corr(pred: &[f64], gold: &[f64]) -> Result<f64> {
    same_len(pred, gold)?;
    if pred.len() < 2 {
        return Err(Error::contract("correlation needs at least two samples"));
    }
    let n = pred.len() as f64;
    let mp = pred.iter().sum::<f64>() / n;
    let mg = gold.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (p, g) in pred.iter().zip(gold) {
        let (dp, dg) = (p - mp, g - mg);
        sxy += dp * dg;
        sxx += dp * dp;
        syy += dg * dg;
    }
    if sxx == 0.0 {
        return Err(Error::UndefinedCorrelation("prediction"));
    }
    if syy == 0.0 {
        return Err(Error::UndefinedCorrelation("gold"));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[inline]
fn non_negative(v: f64) -> bool {
    v >= 0.0
}

pub fn binary_f1(pred: &[f64], gold: &[f64]) -> Result<f64> {
    same_len(pred, gold)?;
    if pred.is_empty() {
        return Err(Error::contract("F1 of zero samples"));
    }
    // confusion counts indexed [gold][pred], class 1 = non-negative
    let mut cm = [[0usize; 2]; 2];
    for (&p, &g) in pred.iter().zip(gold) {
        cm[usize::from(non_negative(g))][usize::from(non_negative(p))] += 1;
    }
    let n = pred.len() as f64;
    let mut weighted = 0.0;
    #[allow(clippy::needless_range_loop)]
    for c in 0..2 {
        let tp = cm[c][c] as f64;
        let predicted = (cm[0][c] + cm[1][c]) as f64;
        let support = (cm[c][0] + cm[c][1]) as f64;
        let precision = if predicted > 0.0 { tp / predicted } else { 0.0 };
        let recall = if support > 0.0 { tp / support } else { 0.0 };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        weighted += support / n * f1;
    }
    Ok(100.0 * weighted)
}

/// Mean absolute error and sign-agreement accuracy in percent.
pub fn mae_acc2(pred: &[f64], gold: &[f64]) -> Result<(f64, f64)> {
    same_len(pred, gold)?;
    if pred.is_empty() {
        return Err(Error::contract("MAE of zero samples"));
    }
    let n = pred.len() as f64;
    let mae = pred.iter().zip(gold).map(|(p, g)| (p - g).abs()).sum::<f64>() / n;
    let agree = pred
        .iter()
        .zip(gold)
        .filter(|(p, g)| non_negative(**p) == non_negative(**g))
        .count();
    Ok((mae, 100.0 * agree as f64 / n))
}

/// clean − perturbed for Corr/F1/Acc-2, perturbed − clean for MAE.
pub fn compute_drop(clean: &MetricSet, perturbed: &MetricSet) -> DropReport {
    DropReport {
        clean: *clean,
        perturbed: *perturbed,
        drop: MetricDrop {
            corr: clean.corr - perturbed.corr,
            f1: clean.f1 - perturbed.f1,
            acc2: clean.acc2 - perturbed.acc2,
            mae: perturbed.mae - clean.mae,
        },
    }
}

/// Percentage by which `robust_drop` shrinks `baseline_drop`.
pub fn relative_reduction(baseline_drop: f64, robust_drop: f64) -> Result<f64> {
    if baseline_drop == 0.0 {
        return Err(Error::UndefinedReduction);
    }
    Ok(100.0 * (baseline_drop - robust_drop) / baseline_drop)
}
