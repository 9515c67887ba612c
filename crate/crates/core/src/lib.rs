//! Modality-robustness diagnostics for multimodal sentiment regressors.
//!
//! The crate trains small fusion models (one encoder per modality plus a
//! concat-MLP head), probes them by zeroing or noising one modality's
//! representation on a sampled fraction of the test set, and trains
//! robust variants that see the same perturbations during training.

pub mod autodiff;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod metrics;
pub mod model;
pub mod perturb;
pub mod report;
pub mod rng;
pub mod trainer;

pub use autodiff::{gradient_check, Activation, Tape, Tensor, Var};
pub use data::{
    batches, generate_synthetic, load_features, save_features, Dataset, Dims, FeatureRecord,
    Modality, Split, SyntheticSpec,
};
pub use diagnostics::{
    aggregate_seeds, compare, run_diagnostic, sweep, AggregateReport, Comparison,
    DiagnosticConfig, DiagnosticKey, SweepResult,
};
pub use error::{Error, Result};
pub use metrics::{compute_drop, relative_reduction, DropReport, MetricSet};
pub use model::{HookPoint, Intervention, InterventionKind, Model, ModelConfig};
pub use perturb::{PerturbationKind, PerturbationPlan, PlanKind};
pub use report::{emit_report, ReportFormat};
pub use trainer::{train, train_robust, train_standard, Optimizer, RobustSpec, RunArtifacts, TrainConfig};
