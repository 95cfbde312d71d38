//! Monte-Carlo harness: JSON configuration, the four experiment runners and
//! their CSV/JSON outputs.
//!
//! Every trial owns the seed stream `(master, trial)`. Trials run in a rayon
//! pool and are collected in trial order, so outputs do not depend on the
//! number of workers.

mod bottleneck;
mod discriminator;
mod explainer;
mod gh_validation;
mod output;

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::explain::ExplainError;
use crate::geometry::{load_csv, GeometryError, PointCloud, Seed, SyntheticSpec};
use crate::gh::GhError;
use crate::manifold::ManifoldError;
use crate::models::{ModelError, TrainParams};
use crate::perturb::{PerturbError, PerturbationKind};
use crate::tda::{TdaError, DEFAULT_SIMPLEX_BUDGET};

pub use bottleneck::run_bottleneck_comparison;
pub use discriminator::{quadratic_features, run_discriminator_test};
pub use explainer::{explain_input, external_model, run_explainer_eval, sparse_testbed, Testbed};
pub use gh_validation::run_gh_validation;
pub use output::{format_metric, summarize, write_outputs, SummaryRow};

/// Perturbation count used by the explainer evaluation unless overridden.
pub const DEFAULT_PERTURBATIONS: usize = 1000;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Tda(#[from] TdaError),
    #[error(transparent)]
    Gh(#[from] GhError),
    #[error(transparent)]
    Manifold(#[from] ManifoldError),
    #[error(transparent)]
    Perturb(#[from] PerturbError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Explain(#[from] ExplainError),
    #[error("metric `{name}` is not finite ({value}) in trial {trial}")]
    NonFinite { trial: usize, name: String, value: f64 },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl ExperimentError {
    /// Whether the error stems from the configuration rather than the run.
    pub fn is_config(&self) -> bool {
        matches!(self, ExperimentError::Config(_))
    }
}

fn config_err(msg: impl Into<String>) -> ExperimentError {
    ExperimentError::Config(msg.into())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    BottleneckComparison,
    GhValidation,
    ExplainerEval,
    DiscriminatorTest,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::BottleneckComparison => "bottleneck_comparison",
            ExperimentKind::GhValidation => "gh_validation",
            ExperimentKind::ExplainerEval => "explainer_eval",
            ExperimentKind::DiscriminatorTest => "discriminator_test",
        }
    }
}

/// Perturbation scheme as named in configs: the noise and masking kinds plus
/// the full EMaP sampler.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Gaussian,
    Projection,
    Orthogonal,
    ZeroMask,
    MultiplicativeUniform,
    Emap,
}

impl Scheme {
    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Emap => "emap",
            other => other.kind().name(),
        }
    }

    /// Underlying perturbation kind (EMaP draws are orthogonal).
    pub fn kind(&self) -> PerturbationKind {
        match self {
            Scheme::Gaussian => PerturbationKind::Gaussian,
            Scheme::Projection => PerturbationKind::Projection,
            Scheme::Orthogonal | Scheme::Emap => PerturbationKind::Orthogonal,
            Scheme::ZeroMask => PerturbationKind::ZeroMask,
            Scheme::MultiplicativeUniform => PerturbationKind::MultiplicativeUniform,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, ExperimentError> {
        if s == "emap" {
            return Ok(Scheme::Emap);
        }
        let kind: PerturbationKind = s.parse().map_err(|_| config_err(format!("unknown scheme `{s}`")))?;
        Ok(match kind {
            PerturbationKind::Gaussian => Scheme::Gaussian,
            PerturbationKind::Projection => Scheme::Projection,
            PerturbationKind::Orthogonal => Scheme::Orthogonal,
            PerturbationKind::ZeroMask => Scheme::ZeroMask,
            PerturbationKind::MultiplicativeUniform => Scheme::MultiplicativeUniform,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSpec {
    Synthetic(SyntheticSpec),
    /// CSV file of points, with an optional trailing `label` column.
    Csv(PathBuf),
}

impl DatasetSpec {
    /// The cloud of one trial. CSV data is the same in every trial.
    pub fn load(&self, seed: Seed) -> Result<PointCloud, ExperimentError> {
        match self {
            DatasetSpec::Synthetic(spec) => Ok(spec.generate(seed)?),
            DatasetSpec::Csv(path) => Ok(load_csv(path)?),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TdaSettings {
    pub max_radius: Option<f64>,
    pub simplex_budget: u64,
    /// When the complex of the full cloud exceeds the budget, rerun the trial
    /// on a uniform subsample of this many points.
    pub budget_fallback_points: Option<usize>,
}

impl Default for TdaSettings {
    fn default() -> Self {
        Self {
            max_radius: None,
            simplex_budget: DEFAULT_SIMPLEX_BUDGET,
            budget_fallback_points: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GhSettings {
    pub n_points: usize,
    pub ambient_dim: usize,
    /// r as a fraction of the Lemma-1 bound; ignored when `radii` is set.
    pub radius_fraction: f64,
    pub max_redraws: usize,
}

impl Default for GhSettings {
    fn default() -> Self {
        Self {
            n_points: 5,
            ambient_dim: 3,
            radius_fraction: 0.5,
            max_redraws: 100,
        }
    }
}

/// Where the explained model comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelSource {
    /// JSON model file (`linear` or `logistic`).
    File(PathBuf),
    /// External process speaking the JSON-lines protocol.
    Command(Vec<String>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExplainerSettings {
    /// External model; `None` trains the sparse L1-logistic testbed.
    pub model: Option<ModelSource>,
    pub inputs_per_trial: usize,
    pub n_perturbations: usize,
    pub top_k: Vec<usize>,
    pub n_features: usize,
    pub n_true_features: usize,
    pub n_train: usize,
    /// Probability that a testbed feature is active.
    pub density: f64,
    pub train: TrainParams,
    pub log_odds: bool,
    pub top_fraction: f64,
    pub infidelity: bool,
    pub infidelity_draws: usize,
    pub kernel_width: Option<f64>,
    pub uniform_kernel: bool,
    pub ridge: f64,
}

impl Default for ExplainerSettings {
    fn default() -> Self {
        Self {
            model: None,
            inputs_per_trial: 1,
            n_perturbations: DEFAULT_PERTURBATIONS,
            top_k: vec![2, 4, 6, 8],
            n_features: 20,
            n_true_features: 4,
            n_train: 500,
            density: 0.3,
            train: TrainParams {
                l1_strength: 0.02,
                ..TrainParams::default()
            },
            log_odds: false,
            top_fraction: 0.2,
            infidelity: false,
            infidelity_draws: 100,
            kernel_width: None,
            uniform_kernel: false,
            ridge: crate::explain::DEFAULT_RIDGE,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiscriminatorSettings {
    pub train_fraction: f64,
    pub min_per_class: usize,
    pub train: TrainParams,
}

impl Default for DiscriminatorSettings {
    fn default() -> Self {
        Self {
            train_fraction: 0.7,
            min_per_class: 40,
            train: TrainParams {
                l1_strength: 0.0,
                epochs: 500,
                lr: 0.5,
                init_scale: 1e-3,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub dataset: Option<DatasetSpec>,
    /// Empty means the experiment's default scheme list.
    #[serde(default)]
    pub schemes: Vec<Scheme>,
    #[serde(default)]
    pub radii: Vec<f64>,
    #[serde(default = "one")]
    pub n_trials: usize,
    /// Low dimension V (defaults to the dataset's own when known).
    #[serde(default)]
    pub low_dim: Option<usize>,
    /// Pivots per label (p).
    #[serde(default = "one")]
    pub pivots_per_label: usize,
    /// Perturbations per pivot (k); by default the total is
    /// `explainer.n_perturbations` spread over the pivots.
    #[serde(default)]
    pub per_pivot: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    /// Worker threads; not part of the experiment's identity.
    #[serde(default, skip_serializing)]
    pub workers: Option<usize>,
    #[serde(default, skip_serializing)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub tda: TdaSettings,
    #[serde(default)]
    pub gh: GhSettings,
    #[serde(default)]
    pub explainer: ExplainerSettings,
    #[serde(default)]
    pub discriminator: DiscriminatorSettings,
}

fn one() -> usize {
    1
}

impl ExperimentConfig {
    pub fn new(experiment: ExperimentKind) -> Self {
        Self {
            experiment,
            dataset: None,
            schemes: Vec::new(),
            radii: Vec::new(),
            n_trials: 1,
            low_dim: None,
            pivots_per_label: 1,
            per_pivot: None,
            seed: 0,
            workers: None,
            out_dir: None,
            tda: TdaSettings::default(),
            gh: GhSettings::default(),
            explainer: ExplainerSettings::default(),
            discriminator: DiscriminatorSettings::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        serde_json::from_str(text).map_err(|e| config_err(e.to_string()))
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, ExperimentError> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Schemes in effect: the configured list or the experiment default.
    pub fn effective_schemes(&self) -> Vec<Scheme> {
        if !self.schemes.is_empty() {
            return self.schemes.clone();
        }
        match self.experiment {
            ExperimentKind::BottleneckComparison => vec![Scheme::Gaussian, Scheme::Projection, Scheme::Orthogonal],
            ExperimentKind::GhValidation => vec![Scheme::Orthogonal],
            ExperimentKind::ExplainerEval => vec![
                Scheme::ZeroMask,
                Scheme::Gaussian,
                Scheme::MultiplicativeUniform,
                Scheme::Emap,
            ],
            ExperimentKind::DiscriminatorTest => vec![Scheme::Emap, Scheme::Gaussian],
        }
    }

    /// Checks everything that can be checked without running a trial.
    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.n_trials == 0 {
            return Err(config_err("n_trials must be at least 1"));
        }
        if let Some(&r) = self.radii.iter().find(|r| !(r.is_finite() && **r >= 0.0)) {
            return Err(config_err(format!("radii must be finite and non-negative, got {r}")));
        }
        if self.workers == Some(0) {
            return Err(config_err("workers must be at least 1"));
        }
        match &self.dataset {
            Some(DatasetSpec::Csv(path)) if !path.is_file() => {
                return Err(config_err(format!("dataset file {} does not exist", path.display())));
            }
            Some(DatasetSpec::Synthetic(spec)) => {
                spec.shape.validate().map_err(|e| config_err(e.to_string()))?;
                if spec.n_points == 0 {
                    return Err(config_err("synthetic dataset needs at least one point"));
                }
            }
            _ => {}
        }
        if let Some(ModelSource::File(path)) = &self.explainer.model {
            if !path.is_file() {
                return Err(config_err(format!("model file {} does not exist", path.display())));
            }
        }
        let schemes = self.effective_schemes();
        let allowed: &[Scheme] = match self.experiment {
            ExperimentKind::BottleneckComparison => &[Scheme::Gaussian, Scheme::Projection, Scheme::Orthogonal],
            ExperimentKind::GhValidation => &[Scheme::Orthogonal],
            ExperimentKind::ExplainerEval | ExperimentKind::DiscriminatorTest => &[
                Scheme::ZeroMask,
                Scheme::Gaussian,
                Scheme::MultiplicativeUniform,
                Scheme::Emap,
            ],
        };
        if let Some(s) = schemes.iter().find(|s| !allowed.contains(s)) {
            return Err(config_err(format!(
                "scheme `{s}` is not valid for {}",
                self.experiment.name()
            )));
        }
        let mut seen = schemes.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != schemes.len() {
            return Err(config_err("schemes must not repeat"));
        }
        match self.experiment {
            ExperimentKind::BottleneckComparison => {
                if self.dataset.is_none() {
                    return Err(config_err("bottleneck_comparison needs a dataset"));
                }
                if self.radii.is_empty() {
                    return Err(config_err("bottleneck_comparison needs at least one radius"));
                }
                if matches!(self.dataset, Some(DatasetSpec::Csv(_))) && self.low_dim.is_none() {
                    return Err(config_err("CSV datasets need low_dim"));
                }
                if self.tda.budget_fallback_points == Some(0) {
                    return Err(config_err("budget_fallback_points must be positive"));
                }
            }
            ExperimentKind::GhValidation => {
                let g = &self.gh;
                if g.n_points < 2 {
                    return Err(config_err("Theorem requires n >= 2"));
                }
                if g.n_points > 7 {
                    return Err(config_err(format!(
                        "the brute-force oracle is limited to 7 points per cloud, got {}",
                        g.n_points
                    )));
                }
                let v = self.low_dim.unwrap_or(2);
                if v == 0 || v >= g.ambient_dim {
                    return Err(config_err(format!(
                        "need 1 <= V < N, got V = {v}, N = {}",
                        g.ambient_dim
                    )));
                }
                if self.radii.is_empty() && !(g.radius_fraction > 0.0 && g.radius_fraction.is_finite()) {
                    return Err(config_err("radius_fraction must be positive"));
                }
            }
            ExperimentKind::ExplainerEval => {
                let e = &self.explainer;
                if e.n_perturbations == 0 {
                    return Err(config_err("n_perturbations must be at least 1"));
                }
                if e.top_k.contains(&0) {
                    return Err(config_err("top_k entries must be at least 1"));
                }
                if e.model.is_some() && self.dataset.is_none() {
                    return Err(config_err("an external model needs a dataset to explain"));
                }
                if e.model.is_none() {
                    if e.n_true_features == 0 || e.n_true_features > e.n_features {
                        return Err(config_err("need 1 <= n_true_features <= n_features"));
                    }
                    if !(e.density > 0.0 && e.density < 1.0) {
                        return Err(config_err("density must be in (0, 1)"));
                    }
                }
                if self.radii.len() > 1 {
                    return Err(config_err("explainer_eval takes a single radius"));
                }
            }
            ExperimentKind::DiscriminatorTest => {
                if self.dataset.is_none() {
                    return Err(config_err("discriminator_test needs a dataset"));
                }
                if self.radii.len() != 1 {
                    return Err(config_err("discriminator_test takes exactly one radius"));
                }
                let f = self.discriminator.train_fraction;
                if !(f > 0.0 && f < 1.0) {
                    return Err(config_err("train_fraction must be in (0, 1)"));
                }
            }
        }
        Ok(())
    }
}

/// One row of `trials.csv`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: Seed,
    /// Rows with the same pair id share their underlying noise draws.
    pub pair: usize,
    pub scheme: String,
    pub radius: f64,
    /// `ok`, or why the row carries no (or partial) metrics.
    pub status: String,
    pub metrics: BTreeMap<String, f64>,
}

impl TrialRecord {
    pub fn new(trial: usize, seed: Seed, pair: usize, scheme: impl Into<String>, radius: f64) -> Self {
        Self {
            trial,
            seed,
            pair,
            scheme: scheme.into(),
            radius,
            status: "ok".to_string(),
            metrics: BTreeMap::new(),
        }
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).copied()
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

/// Everything a run produces.
#[derive(Clone, Debug, PartialEq)]
pub struct RunOutput {
    pub records: Vec<TrialRecord>,
    pub summary: Vec<SummaryRow>,
    pub meta: serde_json::Value,
}

impl RunOutput {
    fn check_finite(&self) -> Result<(), ExperimentError> {
        for r in &self.records {
            if let Some((name, &value)) = r.metrics.iter().find(|(_, v)| !v.is_finite()) {
                return Err(ExperimentError::NonFinite {
                    trial: r.trial,
                    name: name.clone(),
                    value,
                });
            }
        }
        Ok(())
    }
}

/// Validates `config` and dispatches to its runner.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunOutput, ExperimentError> {
    config.validate()?;
    let out = match config.experiment {
        ExperimentKind::BottleneckComparison => run_bottleneck_comparison(config)?,
        ExperimentKind::GhValidation => run_gh_validation(config)?,
        ExperimentKind::ExplainerEval => run_explainer_eval(config)?,
        ExperimentKind::DiscriminatorTest => run_discriminator_test(config)?,
    };
    out.check_finite()?;
    Ok(out)
}

/// Runs `f` for every trial in a pool of `workers` threads and returns the
/// results in trial order. The first error in trial order wins.
pub(crate) fn run_trials<T, F>(workers: Option<usize>, n_trials: usize, f: F) -> Result<Vec<T>, ExperimentError>
where
    T: Send,
    F: Fn(usize) -> Result<T, ExperimentError> + Sync + Send,
{
    let run = || (0..n_trials).into_par_iter().map(&f).collect::<Vec<_>>();
    let results = match workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| config_err(format!("cannot build worker pool: {e}")))?
            .install(run),
        None => run(),
    };
    results.into_iter().collect()
}

fn base_meta(config: &ExperimentConfig) -> Result<serde_json::Map<String, serde_json::Value>, ExperimentError> {
    let mut meta = serde_json::Map::new();
    meta.insert("experiment".into(), config.experiment.name().into());
    meta.insert("version".into(), env!("CARGO_PKG_VERSION").into());
    meta.insert("seed".into(), config.seed.into());
    meta.insert("config".into(), serde_json::to_value(config)?);
    Ok(meta)
}
