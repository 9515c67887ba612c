use serde::{Deserialize, Serialize};

use super::{Dataset, Dims, FeatureRecord, Modality, Split};
use crate::error::{Error, Result};
use crate::rng::{tag, Stream};

/// Recipe for a synthetic dataset whose label signal is split across
/// modalities by `signal_weights`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    /// Record counts for (train, valid, test).
    pub n_per_split: [usize; 3],
    pub dims: Dims,
    /// Fraction of the label carried by (language, audio, visual).
    pub signal_weights: [f64; 3],
    pub feature_noise_sigma: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        if self.n_per_split.contains(&0) {
            return Err(Error::contract("every split needs at least one record"));
        }
        if self.signal_weights.iter().any(|w| w.is_nan() || *w < 0.0) {
            return Err(Error::contract("signal weights must be nonnegative"));
        }
        let total: f64 = self.signal_weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::contract(format!(
                "signal weights must sum to 1, got {total}"
            )));
        }
        if !self.feature_noise_sigma.is_finite() || self.feature_noise_sigma < 0.0 {
            return Err(Error::contract("feature noise sigma must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Draws a dataset: latent `s ~ U(-3, 3)` is the label, and modality `m`
/// observes `s * w_m * v_m + noise` along a fixed random unit direction.
///
/// Stream layout: the three directions first, then records split by split,
/// each record drawing `s` followed by language, audio, visual noise.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut stream = Stream::from_parts(spec.seed, &[tag::DATA]);

    let directions: Vec<Vec<f64>> = Modality::ALL
        .iter()
        .map(|&m| unit_vector(&mut stream, spec.dims.of(m)))
        .collect();

    let total: usize = spec.n_per_split.iter().sum();
    let mut records = Vec::with_capacity(total);
    for (split, &n) in Split::ALL.iter().zip(&spec.n_per_split) {
        for i in 0..n {
            let s = stream.uniform(-3.0, 3.0);
            let mut observe = |m: Modality| -> Vec<f64> {
                let w = spec.signal_weights[m.index()];
                directions[m.index()]
                    .iter()
                    .map(|v| s * w * v + spec.feature_noise_sigma * stream.normal())
                    .collect()
            };
            let language = observe(Modality::Language);
            let audio = observe(Modality::Audio);
            let visual = observe(Modality::Visual);
            records.push(FeatureRecord {
                id: format!("{split}-{i:05}"),
                split: *split,
                label: s,
                language,
                audio,
                visual,
            });
        }
    }
    Dataset::new(spec.dims, records)
}

fn unit_vector(stream: &mut Stream, n: usize) -> Vec<f64> {
    loop {
        let v = stream.normals(n);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}
