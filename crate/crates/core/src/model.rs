//! Late-fusion regressor: one tanh MLP encoder per modality, concatenated
//! into an MLP head with a scalar output.
//!
//! Perturbations are applied inside [`Model::forward`] at one of two
//! [`HookPoint`]s: on the raw modality features before the encoder, or on
//! the encoded representation before fusion.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Activation, Tape, Tensor, Var};
use crate::data::{Dataset, Dims, FeatureRecord, Modality, Split};
use crate::error::{Error, Result};
use crate::rng::{tag, Stream};

const PREDICT_BATCH: usize = 256;

#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum HookPoint {
    /// Input-level features, before the modality encoder.
    PreEncoder,
    /// Encoded representation, before fusion.
    #[default]
    PostEncoder,
}

impl FromStr for HookPoint {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pre" | "pre_encoder" => Ok(HookPoint::PreEncoder),
            "post" | "post_encoder" => Ok(HookPoint::PostEncoder),
            other => Err(Error::contract(format!("unknown hook `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fusion {
    ConcatMlp,
}

fn default_encoder_layers() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub dims: Dims,
    pub hidden_dim: usize,
    #[serde(default = "default_encoder_layers")]
    pub encoder_layers: usize,
    pub fusion: Fusion,
    pub init_seed: u64,
}

impl ModelConfig {
    pub fn new(dims: Dims, hidden_dim: usize, init_seed: u64) -> Self {
        Self {
            dims,
            hidden_dim,
            encoder_layers: default_encoder_layers(),
            fusion: Fusion::ConcatMlp,
            init_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        if self.hidden_dim == 0 {
            return Err(Error::contract("hidden_dim must be at least 1"));
        }
        if self.encoder_layers == 0 {
            return Err(Error::contract("encoder_layers must be at least 1"));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` of every linear layer in parameter order.
    fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let h = self.hidden_dim;
        let mut shapes = Vec::new();
        for m in Modality::ALL {
            shapes.push((self.dims.of(m), h));
            shapes.extend(std::iter::repeat_n((h, h), self.encoder_layers - 1));
        }
        shapes.push((3 * h, h));
        shapes.push((h, 1));
        shapes
    }

    pub fn parameter_count(&self) -> usize {
        self.layer_shapes().iter().map(|(i, o)| i * o + o).sum()
    }
}

/// `x W + b` with `W` stored fan_in × fan_out.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub enum InterventionKind {
    Missing,
    /// Adds standard normal draws taken from (a copy of) this stream.
    Noise(Stream),
}

/// Perturbation of one sample's modality at one hook during a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Intervention {
    /// Row within the batch (or split, for [`Model::predict`]).
    pub sample: usize,
    pub modality: Modality,
    pub hook: HookPoint,
    pub kind: InterventionKind,
}

/// Result of a recorded forward pass.
pub struct Forward {
    pub tape: Tape,
    /// n×1 predictions.
    pub predictions: Var,
    /// Parameter handles in [`Model::params`] order.
    pub params: Vec<Var>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    config: ModelConfig,
    layers: Vec<Linear>,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    config: ModelConfig,
    params: Vec<f64>,
}

impl Model {
    /// Initializes every weight and bias uniformly in ±1/√fan_in.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut stream = Stream::from_parts(config.init_seed, &[tag::INIT]);
        let layers = config
            .layer_shapes()
            .into_iter()
            .map(|(fan_in, fan_out)| {
                let bound = 1.0 / (fan_in as f64).sqrt();
                let mut draw = |n: usize| -> Vec<f64> {
                    (0..n).map(|_| stream.uniform(-bound, bound)).collect()
                };
                let w = draw(fan_in * fan_out);
                let b = draw(fan_out);
                Linear {
                    weight: Tensor::new(fan_in, fan_out, w).expect("layer shape"),
                    bias: Tensor::new(1, fan_out, b).expect("layer shape"),
                }
            })
            .collect();
        Ok(Self { config, layers })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn encoder(&self, m: Modality) -> &[Linear] {
        let k = self.config.encoder_layers;
        &self.layers[m.index() * k..(m.index() + 1) * k]
    }

    pub fn encoder_mut(&mut self, m: Modality) -> &mut [Linear] {
        let k = self.config.encoder_layers;
        &mut self.layers[m.index() * k..(m.index() + 1) * k]
    }

    /// The two fusion layers: 3h → h (tanh) and h → 1 (identity).
    pub fn fusion(&self) -> &[Linear] {
        &self.layers[3 * self.config.encoder_layers..]
    }

    pub fn fusion_mut(&mut self) -> &mut [Linear] {
        let k = self.config.encoder_layers;
        &mut self.layers[3 * k..]
    }

    /// Weight then bias of each layer: language encoder, audio encoder,
    /// visual encoder, fusion head.
    pub fn params(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.params().iter().flat_map(|t| t.data().iter().copied()).collect()
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        let expected = self.config.parameter_count();
        if flat.len() != expected {
            return Err(Error::Schema(format!(
                "expected {expected} parameters, got {}",
                flat.len()
            )));
        }
        let mut offset = 0;
        for t in self.params_mut() {
            let n = t.len();
            t.data_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    /// Records the network on a fresh tape with the given interventions.
    pub fn forward(
        &self,
        batch: &[&FeatureRecord],
        interventions: &[Intervention],
    ) -> Result<Forward> {
        let mut tape = Tape::new();
        let params: Vec<Var> = self.params().into_iter().map(|t| tape.param(t.clone())).collect();
        let predictions = self.record(&mut tape, &params, batch, interventions)?;
        Ok(Forward {
            tape,
            predictions,
            params,
        })
    }

    /// Records the network onto `tape` using `params` (handles in
    /// [`Model::params`] order, possibly holding other values) and returns
    /// the n×1 predictions.
    pub fn record(
        &self,
        tape: &mut Tape,
        params: &[Var],
        batch: &[&FeatureRecord],
        interventions: &[Intervention],
    ) -> Result<Var> {
        if batch.is_empty() {
            return Err(Error::contract("forward on an empty batch"));
        }
        if let Some(bad) = interventions.iter().find(|iv| iv.sample >= batch.len()) {
            return Err(Error::contract(format!(
                "intervention on sample {} but the batch has {} rows",
                bad.sample,
                batch.len()
            )));
        }
        if params.len() != 2 * self.layers.len() {
            return Err(Error::contract("parameter list does not match the model"));
        }
        let layer = |i: usize| (params[2 * i], params[2 * i + 1]);
        let n = batch.len();
        let k = self.config.encoder_layers;

        let mut reprs = Vec::with_capacity(3);
        for m in Modality::ALL {
            let d = self.config.dims.of(m);
            let mut data = Vec::with_capacity(n * d);
            for r in batch {
                let f = r.features(m);
                if f.len() != d {
                    return Err(Error::Schema(format!(
                        "record `{}`: {m} has length {}, model expects {d}",
                        r.id,
                        f.len()
                    )));
                }
                data.extend_from_slice(f);
            }
            let mut x = tape.constant(Tensor::new(n, d, data)?);
            x = intervene(tape, x, m, HookPoint::PreEncoder, interventions)?;
            for i in 0..k {
                let (w, b) = layer(m.index() * k + i);
                let z = tape.matmul(x, w)?;
                let z = tape.add_row(z, b)?;
                x = tape.activation(z, Activation::Tanh);
            }
            x = intervene(tape, x, m, HookPoint::PostEncoder, interventions)?;
            reprs.push(x);
        }

        let fused = tape.concat_cols(&reprs)?;
        let (w1, b1) = layer(3 * k);
        let z = tape.matmul(fused, w1)?;
        let z = tape.add_row(z, b1)?;
        let h = tape.activation(z, Activation::Tanh);
        let (w2, b2) = layer(3 * k + 1);
        let y = tape.matmul(h, w2)?;
        tape.add_row(y, b2)
    }

    /// Predictions for `records` in order. Intervention indices refer to
    /// positions in `records`.
    pub fn predict_records(
        &self,
        records: &[&FeatureRecord],
        interventions: &[Intervention],
    ) -> Result<Vec<f64>> {
        if let Some(bad) = interventions.iter().find(|iv| iv.sample >= records.len()) {
            return Err(Error::contract(format!(
                "intervention on sample {} but only {} records",
                bad.sample,
                records.len()
            )));
        }
        let mut out = Vec::with_capacity(records.len());
        for (bi, chunk) in records.chunks(PREDICT_BATCH).enumerate() {
            let start = bi * PREDICT_BATCH;
            let local: Vec<Intervention> = interventions
                .iter()
                .filter(|iv| (start..start + chunk.len()).contains(&iv.sample))
                .map(|iv| Intervention {
                    sample: iv.sample - start,
                    ..iv.clone()
                })
                .collect();
            let fwd = self.forward(chunk, &local)?;
            out.extend_from_slice(fwd.tape.value(fwd.predictions).data());
        }
        Ok(out)
    }

    pub fn predict(
        &self,
        dataset: &Dataset,
        split: Split,
        interventions: &[Intervention],
    ) -> Result<Vec<f64>> {
        let records = dataset.split(split);
        if records.is_empty() {
            return Err(Error::contract(format!("split `{split}` is empty")));
        }
        self.predict_records(&records, interventions)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&Checkpoint {
            config: self.config.clone(),
            params: self.flat_params(),
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ckpt: Checkpoint = serde_json::from_str(text)?;
        let mut model = Model::new(ckpt.config)?;
        model.set_flat_params(&ckpt.params)?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = self.to_json()?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Applies the interventions targeting (`modality`, `hook`) in list order.
fn intervene(
    tape: &mut Tape,
    x: Var,
    modality: Modality,
    hook: HookPoint,
    interventions: &[Intervention],
) -> Result<Var> {
    let mut relevant = interventions
        .iter()
        .filter(|iv| iv.modality == modality && iv.hook == hook)
        .peekable();
    if relevant.peek().is_none() {
        return Ok(x);
    }
    let (rows, cols) = tape.value(x).shape();
    let mut scales = vec![1.0; rows];
    let mut offsets = Tensor::zeros(rows, cols);
    let (mut zeroed, mut noised) = (false, false);
    for iv in relevant {
        let row = &mut offsets.data_mut()[iv.sample * cols..(iv.sample + 1) * cols];
        match &iv.kind {
            InterventionKind::Missing => {
                scales[iv.sample] = 0.0;
                row.fill(0.0);
                zeroed = true;
            }
            InterventionKind::Noise(stream) => {
                let mut s = stream.clone();
                for v in row.iter_mut() {
                    *v += s.normal();
                }
                noised = true;
            }
        }
    }
    let mut out = x;
    if zeroed {
        out = tape.scale_rows(out, scales)?;
    }
    if noised {
        out = tape.add_const(out, &offsets)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SyntheticSpec};

    fn dataset() -> Dataset {
        generate_synthetic(&SyntheticSpec {
            n_per_split: [8, 4, 6],
            dims: Dims::new(4, 3, 2),
            signal_weights: [0.8, 0.1, 0.1],
            feature_noise_sigma: 0.2,
            seed: 3,
        })
        .unwrap()
    }

    fn model(ds: &Dataset) -> Model {
        Model::new(ModelConfig::new(ds.dims(), 5, 17)).unwrap()
    }

    fn missing(sample: usize, m: Modality, hook: HookPoint) -> Intervention {
        Intervention {
            sample,
            modality: m,
            hook,
            kind: InterventionKind::Missing,
        }
    }

    #[test]
    fn parameter_count_matches_layers() {
        let cfg = ModelConfig::new(Dims::new(4, 3, 2), 5, 0);
        // encoders: (4*5+5 + 5*5+5) + (3*5+5 + 30) + (2*5+5 + 30); head: 15*5+5 + 5+1
        let expected = (25 + 30) + (20 + 30) + (15 + 30) + 80 + 6;
        assert_eq!(cfg.parameter_count(), expected);
        assert_eq!(Model::new(cfg).unwrap().flat_params().len(), expected);
    }

    #[test]
    fn init_within_fan_in_bounds() {
        let m = Model::new(ModelConfig::new(Dims::new(9, 4, 4), 6, 1)).unwrap();
        let first = &m.encoder(Modality::Language)[0];
        assert!(first.weight.data().iter().all(|w| w.abs() <= 1.0 / 3.0));
        assert_eq!(Model::new(m.config().clone()).unwrap(), m);
    }

    #[test]
    fn empty_intervention_list_is_a_noop() {
        let ds = dataset();
        let m = model(&ds);
        let a = m.predict(&ds, Split::Test, &[]).unwrap();
        let recs = ds.split(Split::Test);
        let fwd = m.forward(&recs, &[]).unwrap();
        assert_eq!(a, fwd.tape.value(fwd.predictions).data());
        assert_eq!(a.len(), 6);
    }

    #[test]
    fn zero_output_layer_predicts_bias() {
        let ds = dataset();
        let mut m = model(&ds);
        let out = &mut m.fusion_mut()[1];
        out.weight.data_mut().fill(0.0);
        out.bias.data_mut()[0] = 0.375;
        let preds = m.predict(&ds, Split::Test, &[]).unwrap();
        assert!(preds.iter().all(|&p| p == 0.375));
    }

    #[test]
    fn post_encoder_missing_leaves_bias_pathway() {
        let ds = dataset();
        let mut m = model(&ds);
        let h = m.config().hidden_dim;
        // zero the fusion columns fed by audio and visual
        let w1 = &mut m.fusion_mut()[0].weight;
        for r in h..3 * h {
            for c in 0..h {
                w1.set(r, c, 0.0);
            }
        }
        let ivs: Vec<_> = (0..6)
            .map(|i| missing(i, Modality::Language, HookPoint::PostEncoder))
            .collect();
        let preds = m.predict(&ds, Split::Test, &ivs).unwrap();

        let (l1, l2) = (&m.fusion()[0], &m.fusion()[1]);
        let hidden: Vec<f64> = l1.bias.data().iter().map(|b| b.tanh()).collect();
        let by_hand: f64 = hidden
            .iter()
            .zip(l2.weight.data())
            .map(|(a, w)| a * w)
            .sum::<f64>()
            + l2.bias.data()[0];
        for p in preds {
            assert!((p - by_hand).abs() < 1e-12);
        }
    }

    #[test]
    fn pre_and_post_missing_differ_with_encoder_bias() {
        let ds = dataset();
        let mut m = model(&ds);
        for layer in m.encoder_mut(Modality::Language) {
            layer.bias.data_mut().fill(1.0);
        }
        let pre = m
            .predict(&ds, Split::Test, &[missing(0, Modality::Language, HookPoint::PreEncoder)])
            .unwrap();
        let post = m
            .predict(&ds, Split::Test, &[missing(0, Modality::Language, HookPoint::PostEncoder)])
            .unwrap();
        assert_ne!(pre[0], post[0]);
        assert_eq!(pre[1..], post[1..]);
    }

    #[test]
    fn invalid_index_rejected() {
        let ds = dataset();
        let m = model(&ds);
        let r = m.predict(&ds, Split::Test, &[missing(6, Modality::Audio, HookPoint::PostEncoder)]);
        assert!(matches!(r, Err(Error::Contract(_))));
    }

    #[test]
    fn missing_blocks_language_encoder_gradient() {
        let ds = dataset();
        let m = model(&ds);
        let recs = ds.split(Split::Train);
        let one = &recs[..1];
        let mut fwd = m
            .forward(one, &[missing(0, Modality::Language, HookPoint::PostEncoder)])
            .unwrap();
        let s = fwd.tape.sum(fwd.predictions);
        fwd.tape.backward(s).unwrap();
        let k = m.config().encoder_layers;
        for p in &fwd.params[..2 * k] {
            assert!(fwd.tape.grad(*p).iter().all(|&g| g == 0.0));
        }
        // audio encoder still learns
        assert!(fwd.tape.grad(fwd.params[2 * k]).iter().any(|&g| g != 0.0));
    }

    #[test]
    fn checkpoint_roundtrip() {
        let ds = dataset();
        let m = model(&ds);
        let back = Model::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
        let mut bad: serde_json::Value = serde_json::from_str(&m.to_json().unwrap()).unwrap();
        bad["params"].as_array_mut().unwrap().pop();
        assert!(matches!(Model::from_json(&bad.to_string()), Err(Error::Schema(_))));
    }
}
