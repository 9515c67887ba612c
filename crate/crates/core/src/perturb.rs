//! Missing and noisy modality perturbations and how samples are chosen.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::Modality;
use crate::error::{Error, Result};
use crate::model::{HookPoint, Intervention, InterventionKind};
use crate::rng::{tag, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PerturbationKind {
    /// Representation replaced by zeros.
    Missing,
    /// Representation plus i.i.d. N(0, 1) per element.
    Noise,
}

impl PerturbationKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PerturbationKind::Missing => "missing",
            PerturbationKind::Noise => "noise",
        }
    }
}

impl fmt::Display for PerturbationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PerturbationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "missing" => Ok(PerturbationKind::Missing),
            "noise" => Ok(PerturbationKind::Noise),
            other => Err(Error::contract(format!("unknown perturbation `{other}`"))),
        }
    }
}

/// What a plan does to its selected samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlanKind {
    Missing,
    Noise,
    /// First half of the mask missing (the extra one on odd sizes), rest noisy.
    Balanced,
}

impl From<PerturbationKind> for PlanKind {
    fn from(k: PerturbationKind) -> Self {
        match k {
            PerturbationKind::Missing => PlanKind::Missing,
            PerturbationKind::Noise => PlanKind::Noise,
        }
    }
}

impl FromStr for PlanKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "missing" => Ok(PlanKind::Missing),
            "noise" => Ok(PlanKind::Noise),
            "balanced" => Ok(PlanKind::Balanced),
            other => Err(Error::contract(format!("unknown perturbation `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationPlan {
    pub modality: Modality,
    pub kind: PlanKind,
    pub proportion: f64,
    pub hook: HookPoint,
    pub seed: u64,
}

impl PerturbationPlan {
    pub fn new(
        modality: Modality,
        kind: PlanKind,
        proportion: f64,
        hook: HookPoint,
        seed: u64,
    ) -> Result<Self> {
        check_proportion(proportion)?;
        Ok(Self {
            modality,
            kind,
            proportion,
            hook,
            seed,
        })
    }

    /// Which positions of `ids` get which perturbation. Depends only on the
    /// plan and the id list.
    pub fn assignments<S: AsRef<str>>(&self, ids: &[S]) -> Result<Vec<(usize, PerturbationKind)>> {
        check_proportion(self.proportion)?;
        let positions: Vec<usize> = (0..ids.len()).collect();
        let mut stream = Stream::from_parts(self.seed, &[tag::MASK]);
        let mask = sample_mask(&positions, self.proportion, &mut stream);
        Ok(assign(mask, self.kind))
    }

    /// Interventions realizing this plan over `ids`. Noise for each sample
    /// comes from a stream keyed by the plan seed and the sample id.
    pub fn interventions<S: AsRef<str>>(&self, ids: &[S]) -> Result<Vec<Intervention>> {
        Ok(self
            .assignments(ids)?
            .into_iter()
            .map(|(i, kind)| {
                let kind = match kind {
                    PerturbationKind::Missing => InterventionKind::Missing,
                    PerturbationKind::Noise => {
                        InterventionKind::Noise(Stream::for_sample(self.seed, ids[i].as_ref()))
                    }
                };
                Intervention {
                    sample: i,
                    modality: self.modality,
                    hook: self.hook,
                    kind,
                }
            })
            .collect())
    }
}

pub(crate) fn check_proportion(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::contract(format!("proportion must be in [0, 1], got {p}")))
    }
}

/// Splits a mask into kinds according to `kind`.
pub(crate) fn assign<T>(mask: Vec<T>, kind: PlanKind) -> Vec<(T, PerturbationKind)> {
    match kind {
        PlanKind::Missing => mask.into_iter().map(|i| (i, PerturbationKind::Missing)).collect(),
        PlanKind::Noise => mask.into_iter().map(|i| (i, PerturbationKind::Noise)).collect(),
        PlanKind::Balanced => {
            let (missing, noise) = balanced_split(mask);
            missing
                .into_iter()
                .map(|i| (i, PerturbationKind::Missing))
                .chain(noise.into_iter().map(|i| (i, PerturbationKind::Noise)))
                .collect()
        }
    }
}

pub fn apply_missing(x: &[f64]) -> Vec<f64> {
    vec![0.0; x.len()]
}

pub fn apply_noise(x: &[f64], stream: &mut Stream) -> Vec<f64> {
    x.iter().map(|v| v + stream.normal()).collect()
}

/// `floor(p * n)`, tolerant of representation error in `p` (0.29 * 100
/// evaluates to 28.999999999999996 in binary floating point).
pub fn mask_count(n: usize, p: f64) -> usize {
    let raw = p * n as f64;
    ((raw + 1e-9).floor() as usize).min(n)
}

/// Picks `mask_count(ids.len(), p)` distinct ids by a partial Fisher–Yates
/// shuffle. The result is in draw order.
///
/// # Panics
/// If `p` is outside `[0, 1]`.
pub fn sample_mask<T: Clone>(ids: &[T], p: f64, stream: &mut Stream) -> Vec<T> {
    assert!((0.0..=1.0).contains(&p), "proportion must be in [0, 1], got {p}");
    let n = ids.len();
    let k = mask_count(n, p);
    let mut order: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = i + stream.below(n - i);
        order.swap(i, j);
    }
    order[..k].iter().map(|&i| ids[i].clone()).collect()
}

/// First `ceil(k/2)` of the mask go missing, the remainder noisy.
pub fn balanced_split<T>(mut mask: Vec<T>) -> (Vec<T>, Vec<T>) {
    let n_missing = mask.len().div_ceil(2);
    let noise = mask.split_off(n_missing);
    (mask, noise)
}
