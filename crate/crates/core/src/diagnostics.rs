//! Diagnostic checks: perturb one modality on a sampled fraction of the
//! test split and measure how far each metric falls.

use std::thread;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Modality, Split};
use crate::error::{Error, Result};
use crate::metrics::{compute_drop, relative_reduction, DropReport, Metric, MetricSet};
use crate::model::{HookPoint, Model};
use crate::perturb::{check_proportion, PerturbationKind, PerturbationPlan};
use crate::rng::{derive, tag};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticConfig {
    pub proportions: Vec<f64>,
    pub kinds: Vec<PerturbationKind>,
    pub modalities: Vec<Modality>,
    #[serde(default)]
    pub hook: HookPoint,
    pub seeds: Vec<u64>,
}

impl Default for DiagnosticConfig {
    fn default() -> Self {
        Self {
            proportions: vec![0.05, 0.10, 0.15, 0.30],
            kinds: vec![PerturbationKind::Missing, PerturbationKind::Noise],
            modalities: Modality::ALL.to_vec(),
            hook: HookPoint::PostEncoder,
            seeds: vec![1, 2, 3],
        }
    }
}

impl DiagnosticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.proportions.is_empty()
            || self.kinds.is_empty()
            || self.modalities.is_empty()
            || self.seeds.is_empty()
        {
            return Err(Error::contract("diagnostic config lists must be nonempty"));
        }
        self.proportions.iter().try_for_each(|&p| check_proportion(p))
    }

    /// Keys in sweep order: modality, then kind, then proportion.
    pub fn keys(&self) -> Vec<DiagnosticKey> {
        let mut keys = Vec::new();
        for &modality in &self.modalities {
            for &kind in &self.kinds {
                for &proportion in &self.proportions {
                    keys.push(DiagnosticKey {
                        modality,
                        kind,
                        proportion,
                    });
                }
            }
        }
        keys
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticKey {
    pub modality: Modality,
    pub kind: PerturbationKind,
    pub proportion: f64,
}

impl DiagnosticKey {
    /// Plan seed for this key under a sweep seed.
    fn plan_seed(&self, seed: u64) -> u64 {
        [
            tag::SWEEP,
            self.modality.index() as u64,
            self.kind as u64,
            self.proportion.to_bits(),
        ]
        .iter()
        .fold(seed, |acc, &p| derive(acc, p))
    }
}

fn test_gold(dataset: &Dataset) -> Result<(Vec<String>, Vec<f64>)> {
    let test = dataset.split(Split::Test);
    if test.is_empty() {
        return Err(Error::contract("test split is empty"));
    }
    Ok((
        test.iter().map(|r| r.id.clone()).collect(),
        test.iter().map(|r| r.label).collect(),
    ))
}

pub fn clean_metrics(model: &Model, dataset: &Dataset) -> Result<MetricSet> {
    let (_, gold) = test_gold(dataset)?;
    MetricSet::evaluate(&model.predict(dataset, Split::Test, &[])?, &gold)
}

fn perturbed_against(
    model: &Model,
    dataset: &Dataset,
    plan: &PerturbationPlan,
    clean: &MetricSet,
) -> Result<DropReport> {
    let (ids, gold) = test_gold(dataset)?;
    let interventions = plan.interventions(&ids)?;
    let preds = model.predict(dataset, Split::Test, &interventions)?;
    let perturbed = MetricSet::evaluate(&preds, &gold)?;
    Ok(compute_drop(clean, &perturbed))
}

/// Clean versus perturbed metrics on the test split for one plan.
/// `proportion = 1.0` removes the modality from every test sample.
pub fn run_diagnostic(model: &Model, dataset: &Dataset, plan: &PerturbationPlan) -> Result<DropReport> {
    let clean = clean_metrics(model, dataset)?;
    perturbed_against(model, dataset, plan, &clean)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub seed: u64,
    pub clean: MetricSet,
    pub reports: Vec<(DiagnosticKey, DropReport)>,
}

impl SweepResult {
    pub fn get(&self, key: &DiagnosticKey) -> Option<&DropReport> {
        self.reports.iter().find(|(k, _)| k == key).map(|(_, r)| r)
    }
}

/// One diagnostic per key, each with its own mask drawn from `(seed, key)`.
pub fn sweep(model: &Model, dataset: &Dataset, cfg: &DiagnosticConfig, seed: u64) -> Result<SweepResult> {
    cfg.validate()?;
    let clean = clean_metrics(model, dataset)?;
    let reports = cfg
        .keys()
        .into_iter()
        .map(|key| {
            let plan = PerturbationPlan::new(
                key.modality,
                key.kind.into(),
                key.proportion,
                cfg.hook,
                key.plan_seed(seed),
            )?;
            Ok((key, perturbed_against(model, dataset, &plan, &clean)?))
        })
        .collect::<Result<_>>()?;
    Ok(SweepResult {
        seed,
        clean,
        reports,
    })
}

/// Sweeps several `(seed, model)` runs on separate threads. Results come
/// back in input order.
pub fn sweep_runs(
    runs: &[(u64, Model)],
    dataset: &Dataset,
    cfg: &DiagnosticConfig,
) -> Result<Vec<SweepResult>> {
    thread::scope(|s| {
        let handles: Vec<_> = runs
            .iter()
            .map(|(seed, model)| s.spawn(move || sweep(model, dataset, cfg, *seed)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("sweep thread panicked"))
            .collect()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Self { mean, std }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatSet {
    pub corr: Stat,
    pub f1: Stat,
    pub acc2: Stat,
    pub mae: Stat,
}

impl StatSet {
    fn collect(per_seed: impl Fn(Metric) -> Vec<f64>) -> Self {
        Self {
            corr: Stat::of(&per_seed(Metric::Corr)),
            f1: Stat::of(&per_seed(Metric::F1)),
            acc2: Stat::of(&per_seed(Metric::Acc2)),
            mae: Stat::of(&per_seed(Metric::Mae)),
        }
    }

    pub fn get(&self, m: Metric) -> Stat {
        match m {
            Metric::Corr => self.corr,
            Metric::F1 => self.f1,
            Metric::Acc2 => self.acc2,
            Metric::Mae => self.mae,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub key: DiagnosticKey,
    pub n_seeds: usize,
    pub clean: StatSet,
    pub perturbed: StatSet,
    pub drop: StatSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    /// Training variant label, e.g. `standard` or `robust`.
    pub variant: String,
    pub seeds: Vec<u64>,
    pub clean: StatSet,
    pub rows: Vec<AggregateRow>,
}

impl AggregateReport {
    pub fn row(&self, key: &DiagnosticKey) -> Option<&AggregateRow> {
        self.rows.iter().find(|r| &r.key == key)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Mean and sample std over seeds for every key.
pub fn aggregate_seeds(variant: impl Into<String>, sweeps: &[SweepResult]) -> Result<AggregateReport> {
    let first = sweeps
        .first()
        .ok_or_else(|| Error::contract("no sweeps to aggregate"))?;
    let keys: Vec<DiagnosticKey> = first.reports.iter().map(|(k, _)| *k).collect();
    for s in sweeps {
        let these: Vec<DiagnosticKey> = s.reports.iter().map(|(k, _)| *k).collect();
        if these != keys {
            return Err(Error::contract(format!(
                "sweep for seed {} has a different key set",
                s.seed
            )));
        }
    }

    let clean = StatSet::collect(|m| sweeps.iter().map(|s| s.clean.get(m)).collect());
    let rows = keys
        .iter()
        .enumerate()
        .map(|(i, key)| {
            let reports: Vec<&DropReport> = sweeps.iter().map(|s| &s.reports[i].1).collect();
            AggregateRow {
                key: *key,
                n_seeds: sweeps.len(),
                clean: StatSet::collect(|m| reports.iter().map(|r| r.clean.get(m)).collect()),
                perturbed: StatSet::collect(|m| reports.iter().map(|r| r.perturbed.get(m)).collect()),
                drop: StatSet::collect(|m| reports.iter().map(|r| r.drop.get(m)).collect()),
            }
        })
        .collect();
    Ok(AggregateReport {
        variant: variant.into(),
        seeds: sweeps.iter().map(|s| s.seed).collect(),
        clean,
        rows,
    })
}

/// Per-metric values where the relative reduction may be undefined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reductions {
    pub corr: Option<f64>,
    pub f1: Option<f64>,
    pub acc2: Option<f64>,
    pub mae: Option<f64>,
}

impl Reductions {
    pub fn get(&self, m: Metric) -> Option<f64> {
        match m {
            Metric::Corr => self.corr,
            Metric::F1 => self.f1,
            Metric::Acc2 => self.acc2,
            Metric::Mae => self.mae,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Deltas {
    pub corr: f64,
    pub f1: f64,
    pub acc2: f64,
    pub mae: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub key: DiagnosticKey,
    /// Percent reduction of the mean drop; `None` when the standard drop is 0.
    pub reduction: Reductions,
    /// Robust clean minus standard clean (means).
    pub clean_delta: Deltas,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub clean_delta: Deltas,
    pub rows: Vec<ComparisonRow>,
}

fn deltas(standard: &StatSet, robust: &StatSet) -> Deltas {
    Deltas {
        corr: robust.corr.mean - standard.corr.mean,
        f1: robust.f1.mean - standard.f1.mean,
        acc2: robust.acc2.mean - standard.acc2.mean,
        mae: robust.mae.mean - standard.mae.mean,
    }
}

pub fn compare(standard: &AggregateReport, robust: &AggregateReport) -> Result<Comparison> {
    let same_keys = standard.rows.len() == robust.rows.len()
        && standard.rows.iter().zip(&robust.rows).all(|(a, b)| a.key == b.key);
    if !same_keys {
        return Err(Error::contract("reports to compare have different key sets"));
    }
    let reduce = |m: Metric, s: &AggregateRow, r: &AggregateRow| {
        relative_reduction(s.drop.get(m).mean, r.drop.get(m).mean).ok()
    };
    let rows = standard
        .rows
        .iter()
        .zip(&robust.rows)
        .map(|(s, r)| ComparisonRow {
            key: s.key,
            reduction: Reductions {
                corr: reduce(Metric::Corr, s, r),
                f1: reduce(Metric::F1, s, r),
                acc2: reduce(Metric::Acc2, s, r),
                mae: reduce(Metric::Mae, s, r),
            },
            clean_delta: deltas(&s.clean, &r.clean),
        })
        .collect();
    Ok(Comparison {
        clean_delta: deltas(&standard.clean, &robust.clean),
        rows,
    })
}
