//! Mini-batch training on MSE, optionally with modality perturbation.
//!
//! Robust mode draws a fresh mask for every batch of every epoch, splits
//! it between missing and noisy according to the configured kind, and
//! applies those interventions inside the forward pass. Validation always
//! runs clean. The returned model is the one with the lowest validation MAE.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::data::{batches, Dataset, FeatureRecord, Modality, Split};
use crate::error::{Error, Result};
use crate::metrics::mae_acc2;
use crate::model::{HookPoint, Intervention, InterventionKind, Model};
use crate::perturb::{self, check_proportion, PerturbationKind, PlanKind};
use crate::rng::{derive, tag, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Sgd {
        lr: f64,
    },
    Adam {
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
    },
}

impl Optimizer {
    pub fn sgd(lr: f64) -> Self {
        Optimizer::Sgd { lr }
    }

    pub fn adam(lr: f64) -> Self {
        Optimizer::Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Perturbation applied to a proportion of every training batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobustSpec {
    pub proportion: f64,
    pub modality: Modality,
    #[serde(default)]
    pub hook: HookPoint,
    pub kind: PlanKind,
}

impl RobustSpec {
    /// Half missing, half noisy on the given modality after its encoder.
    pub fn balanced(proportion: f64, modality: Modality) -> Self {
        Self {
            proportion,
            modality,
            hook: HookPoint::PostEncoder,
            kind: PlanKind::Balanced,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: Optimizer,
    pub seed: u64,
    #[serde(default)]
    pub robust: Option<RobustSpec>,
    /// Epochs without validation improvement before stopping; 0 disables.
    #[serde(default)]
    pub patience: usize,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::contract("epochs and batch_size must be positive"));
        }
        if let Some(r) = &self.robust {
            check_proportion(r.proportion)?;
        }
        let lr = match self.optimizer {
            Optimizer::Sgd { lr } | Optimizer::Adam { lr, .. } => lr,
        };
        if !lr.is_finite() || lr < 0.0 {
            return Err(Error::contract(format!("learning rate must be >= 0, got {lr}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochTrace {
    pub epoch: usize,
    pub train_mse: f64,
    pub valid_mae: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifacts {
    /// Best-validation checkpoint.
    pub model: Model,
    pub best_epoch: usize,
    pub trace: Vec<EpochTrace>,
    pub config: TrainConfig,
}

#[derive(Serialize)]
struct ConfigEcho<'a> {
    model: &'a crate::model::ModelConfig,
    train: &'a TrainConfig,
}

impl RunArtifacts {
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("epoch,train_mse,valid_mae\n");
        for t in &self.trace {
            let _ = writeln!(out, "{},{},{}", t.epoch, t.train_mse, t.valid_mae);
        }
        out
    }

    pub fn config_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ConfigEcho {
            model: self.model.config(),
            train: &self.config,
        })?)
    }

    /// Writes `checkpoint.json`, `config.json` and `trace.csv` into `dir`.
    pub fn write_to(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.model.save(dir.join("checkpoint.json"))?;
        let write = |name: &str, text: String| {
            let p = dir.join(name);
            fs::write(&p, text).map_err(|e| Error::io(p, e))
        };
        write("config.json", self.config_json()? + "\n")?;
        write("trace.csv", self.trace_csv())
    }
}

/// Adam moments per parameter tensor.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Tensor>) -> Self {
        let m: Vec<Vec<f64>> = params.into_iter().map(|t| vec![0.0; t.len()]).collect();
        Self {
            step: 0,
            v: m.clone(),
            m,
        }
    }
}

pub fn optimizer_step(
    params: &mut [&mut Tensor],
    grads: &[Vec<f64>],
    state: &mut OptimizerState,
    optimizer: &Optimizer,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::contract("optimizer state does not match parameters"));
    }
    for ((p, g), m) in params.iter().zip(grads).zip(&state.m) {
        if p.len() != g.len() || p.len() != m.len() {
            return Err(Error::contract(format!(
                "parameter of size {} paired with gradient of size {}",
                p.len(),
                g.len()
            )));
        }
    }
    state.step += 1;
    match *optimizer {
        Optimizer::Sgd { lr } => {
            for (p, g) in params.iter_mut().zip(grads) {
                for (w, g) in p.data_mut().iter_mut().zip(g) {
                    *w -= lr * g;
                }
            }
        }
        Optimizer::Adam {
            lr,
            beta1,
            beta2,
            eps,
        } => {
            let t = state.step as i32;
            let c1 = 1.0 - beta1.powi(t);
            let c2 = 1.0 - beta2.powi(t);
            for (((p, g), m), v) in params
                .iter_mut()
                .zip(grads)
                .zip(&mut state.m)
                .zip(&mut state.v)
            {
                for (((w, &g), m), v) in p.data_mut().iter_mut().zip(g).zip(m).zip(v) {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    let m_hat = *m / c1;
                    let v_hat = *v / c2;
                    *w -= lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
    }
    Ok(())
}

/// Seed shared by every stream used for one training batch.
fn batch_seed(seed: u64, epoch: usize, batch: usize) -> u64 {
    [tag::TRAIN, epoch as u64, batch as u64]
        .iter()
        .fold(seed, |acc, &p| derive(acc, p))
}

/// Which rows of a training batch are perturbed, and how.
pub fn robust_assignments(
    spec: &RobustSpec,
    batch_len: usize,
    seed: u64,
    epoch: usize,
    batch: usize,
) -> Vec<(usize, PerturbationKind)> {
    let rows: Vec<usize> = (0..batch_len).collect();
    let mut stream = Stream::from_parts(batch_seed(seed, epoch, batch), &[tag::MASK]);
    let mask = perturb::sample_mask(&rows, spec.proportion, &mut stream);
    perturb::assign(mask, spec.kind)
}

fn robust_interventions(
    spec: &RobustSpec,
    batch: &[&FeatureRecord],
    seed: u64,
    epoch: usize,
    batch_index: usize,
) -> Vec<Intervention> {
    let noise_seed = batch_seed(seed, epoch, batch_index);
    robust_assignments(spec, batch.len(), seed, epoch, batch_index)
        .into_iter()
        .map(|(row, kind)| Intervention {
            sample: row,
            modality: spec.modality,
            hook: spec.hook,
            kind: match kind {
                PerturbationKind::Missing => InterventionKind::Missing,
                PerturbationKind::Noise => {
                    InterventionKind::Noise(Stream::for_sample(noise_seed, &batch[row].id))
                }
            },
        })
        .collect()
}

/// Trains in standard or robust mode depending on `cfg.robust`.
pub fn train(model: Model, dataset: &Dataset, cfg: &TrainConfig) -> Result<RunArtifacts> {
    cfg.validate()?;
    let train_recs = dataset.split(Split::Train);
    let valid_recs = dataset.split(Split::Valid);
    if train_recs.is_empty() || valid_recs.is_empty() {
        return Err(Error::contract("training needs nonempty train and valid splits"));
    }
    let valid_gold: Vec<f64> = valid_recs.iter().map(|r| r.label).collect();

    let mut model = model;
    let mut state = OptimizerState::new(model.params());
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, Model)> = None;
    let mut stale = 0;

    for epoch in 0..cfg.epochs {
        let epoch_no = epoch + 1;
        let mut sse = 0.0;
        for (bi, idx) in batches(dataset, Split::Train, cfg.batch_size, cfg.seed, epoch as u64)?
            .iter()
            .enumerate()
        {
            let batch: Vec<&FeatureRecord> = idx.iter().map(|&i| train_recs[i]).collect();
            let interventions = match &cfg.robust {
                Some(spec) => robust_interventions(spec, &batch, cfg.seed, epoch, bi),
                None => Vec::new(),
            };
            let mut fwd = model.forward(&batch, &interventions)?;
            let labels = Tensor::new(batch.len(), 1, batch.iter().map(|r| r.label).collect())?;
            let target = fwd.tape.constant(labels);
            let loss = fwd.tape.mse(fwd.predictions, target)?;
            let value = fwd.tape.value(loss).item();
            if !value.is_finite() {
                return Err(Error::Diverged {
                    epoch: epoch_no,
                    loss: value,
                });
            }
            sse += value * batch.len() as f64;
            fwd.tape.backward(loss)?;
            let grads: Vec<Vec<f64>> = fwd.params.iter().map(|p| fwd.tape.grad(*p)).collect();
            optimizer_step(&mut model.params_mut(), &grads, &mut state, &cfg.optimizer)?;
        }

        let preds = model.predict_records(&valid_recs, &[])?;
        let (valid_mae, _) = mae_acc2(&preds, &valid_gold)?;
        if !valid_mae.is_finite() {
            return Err(Error::Diverged {
                epoch: epoch_no,
                loss: valid_mae,
            });
        }
        trace.push(EpochTrace {
            epoch: epoch_no,
            train_mse: sse / train_recs.len() as f64,
            valid_mae,
        });

        if best.as_ref().is_none_or(|(b, _, _)| valid_mae < *b) {
            best = Some((valid_mae, epoch_no, model.clone()));
            stale = 0;
        } else {
            stale += 1;
            if cfg.patience > 0 && stale >= cfg.patience {
                break;
            }
        }
    }

    let (_, best_epoch, model) = best.expect("at least one epoch ran");
    Ok(RunArtifacts {
        model,
        best_epoch,
        trace,
        config: cfg.clone(),
    })
}

pub fn train_standard(model: Model, dataset: &Dataset, cfg: &TrainConfig) -> Result<RunArtifacts> {
    if cfg.robust.is_some() {
        return Err(Error::contract("standard training given a robust config"));
    }
    train(model, dataset, cfg)
}

pub fn train_robust(model: Model, dataset: &Dataset, cfg: &TrainConfig) -> Result<RunArtifacts> {
    if cfg.robust.is_none() {
        return Err(Error::contract("robust training needs a perturbation spec"));
    }
    train(model, dataset, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, Dims, SyntheticSpec};
    use crate::model::ModelConfig;

    fn dataset(n_train: usize) -> Dataset {
        generate_synthetic(&SyntheticSpec {
            n_per_split: [n_train, 8, 8],
            dims: Dims::new(4, 2, 2),
            signal_weights: [0.8, 0.1, 0.1],
            feature_noise_sigma: 0.1,
            seed: 21,
        })
        .unwrap()
    }

    fn cfg(opt: Optimizer, epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            batch_size: 8,
            optimizer: opt,
            seed: 5,
            robust: None,
            patience: 0,
        }
    }

    #[test]
    fn sgd_step_definition() {
        let mut p = Tensor::scalar(1.0);
        let mut state = OptimizerState::new([&p]);
        optimizer_step(&mut [&mut p], &[vec![2.0]], &mut state, &Optimizer::sgd(0.1)).unwrap();
        assert!((p.item() - 0.8).abs() < 1e-15);
        optimizer_step(&mut [&mut p], &[vec![0.0]], &mut state, &Optimizer::sgd(0.1)).unwrap();
        assert!((p.item() - 0.8).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_closed_form() {
        // bias-corrected moments equal g and g^2, so the step is lr*g/(|g|+eps)
        let lr = 0.01;
        let mut p = Tensor::filled(1, 3, 0.5);
        let mut state = OptimizerState::new([&p]);
        optimizer_step(&mut [&mut p], &[vec![1.0; 3]], &mut state, &Optimizer::adam(lr)).unwrap();
        let expected = lr / (1.0 + 1e-8);
        for w in p.data() {
            assert!(((0.5 - w) - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn optimizer_shape_mismatch() {
        let mut p = Tensor::scalar(1.0);
        let mut state = OptimizerState::new([&p]);
        let r = optimizer_step(&mut [&mut p], &[vec![1.0, 2.0]], &mut state, &Optimizer::sgd(0.1));
        assert!(matches!(r, Err(Error::Contract(_))));
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let ds = dataset(16);
        let m = Model::new(ModelConfig::new(ds.dims(), 4, 1)).unwrap();
        for opt in [Optimizer::sgd(0.0), Optimizer::adam(0.0)] {
            let out = train_standard(m.clone(), &ds, &cfg(opt, 3)).unwrap();
            assert_eq!(out.model.flat_params(), m.flat_params());
        }
    }

    #[test]
    fn overfits_a_single_sample() {
        let ds = generate_synthetic(&SyntheticSpec {
            n_per_split: [1, 1, 1],
            dims: Dims::new(3, 2, 2),
            signal_weights: [0.8, 0.1, 0.1],
            feature_noise_sigma: 0.1,
            seed: 2,
        })
        .unwrap();
        let m = Model::new(ModelConfig::new(ds.dims(), 4, 3)).unwrap();
        let out = train_standard(m, &ds, &cfg(Optimizer::adam(0.01), 500)).unwrap();
        let last = out.trace.last().unwrap();
        assert!(last.train_mse < 1e-3, "{last:?}");
    }

    #[test]
    fn training_is_deterministic() {
        let ds = dataset(24);
        let m = Model::new(ModelConfig::new(ds.dims(), 4, 9)).unwrap();
        let a = train_standard(m.clone(), &ds, &cfg(Optimizer::adam(0.01), 4)).unwrap();
        let b = train_standard(m, &ds, &cfg(Optimizer::adam(0.01), 4)).unwrap();
        assert_eq!(a.model.to_json().unwrap(), b.model.to_json().unwrap());
        assert_eq!(a.trace_csv(), b.trace_csv());
    }

    #[test]
    fn robust_with_zero_proportion_matches_standard() {
        let ds = dataset(24);
        let m = Model::new(ModelConfig::new(ds.dims(), 4, 9)).unwrap();
        let std_cfg = cfg(Optimizer::adam(0.01), 4);
        let mut rob_cfg = std_cfg.clone();
        rob_cfg.robust = Some(RobustSpec::balanced(0.0, Modality::Language));
        let a = train_standard(m.clone(), &ds, &std_cfg).unwrap();
        let b = train_robust(m, &ds, &rob_cfg).unwrap();
        assert_eq!(a.model.flat_params(), b.model.flat_params());
        assert_eq!(a.trace, b.trace);
    }

    #[test]
    fn mode_mismatch_is_rejected() {
        let ds = dataset(8);
        let m = Model::new(ModelConfig::new(ds.dims(), 2, 0)).unwrap();
        assert!(train_robust(m.clone(), &ds, &cfg(Optimizer::sgd(0.1), 1)).is_err());
        let mut c = cfg(Optimizer::sgd(0.1), 1);
        c.robust = Some(RobustSpec::balanced(0.3, Modality::Language));
        assert!(train_standard(m, &ds, &c).is_err());
    }

    #[test]
    fn balanced_batch_counts() {
        let spec = RobustSpec::balanced(0.30, Modality::Language);
        let a = robust_assignments(&spec, 32, 1, 0, 0);
        let missing = a.iter().filter(|(_, k)| *k == PerturbationKind::Missing).count();
        assert_eq!((a.len(), missing), (9, 5));
    }

    #[test]
    fn masks_resampled_each_epoch() {
        let spec = RobustSpec::balanced(0.30, Modality::Language);
        let e0 = robust_assignments(&spec, 32, 1, 0, 3);
        let e1 = robust_assignments(&spec, 32, 1, 1, 3);
        assert_ne!(e0, e1);
        assert_eq!(e0, robust_assignments(&spec, 32, 1, 0, 3));
    }

    #[test]
    fn unperturbed_rows_see_clean_inputs() {
        let ds = dataset(32);
        let m = Model::new(ModelConfig::new(ds.dims(), 4, 2)).unwrap();
        let recs = ds.split(Split::Train);
        let spec = RobustSpec::balanced(0.5, Modality::Language);
        let ivs = robust_interventions(&spec, &recs, 3, 0, 0);
        let hit: Vec<usize> = ivs.iter().map(|iv| iv.sample).collect();
        let perturbed = m.predict_records(&recs, &ivs).unwrap();
        let clean = m.predict_records(&recs, &[]).unwrap();
        for i in 0..recs.len() {
            if hit.contains(&i) {
                assert_ne!(perturbed[i], clean[i]);
            } else {
                assert_eq!(perturbed[i].to_bits(), clean[i].to_bits());
            }
        }
    }

    #[test]
    fn divergence_names_the_epoch() {
        let ds = dataset(16);
        let m = Model::new(ModelConfig::new(ds.dims(), 4, 1)).unwrap();
        let r = train_standard(m, &ds, &cfg(Optimizer::sgd(1e300), 3));
        assert!(matches!(r, Err(Error::Diverged { epoch: 1, .. }) | Err(Error::Diverged { epoch: 2, .. })), "{r:?}");
    }
}
