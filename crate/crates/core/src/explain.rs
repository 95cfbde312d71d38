//! LIME surrogate explanations and the metrics used to judge them.
//!
//! The surrogate is a weighted ridge regression of the model output on the
//! feature deltas x0 − x̃ with an unpenalised intercept. Since
//! f(x̃) ≈ f(x0) − g·(x0 − x̃) for a locally linear f with gradient g, the
//! fitted delta coefficients estimate −g. Explanations store g itself
//! (`feature_weights`), so a positive weight means the feature pushes the
//! target class up.

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{euclidean, gaussian_vector, Seed};
use crate::models::{argmax, BlackBoxModel, ModelError};
use crate::perturb::{apply_mask, PerturbError, PerturbationKind, PerturbationScheme, PerturbationSet};

pub const DEFAULT_RIDGE: f64 = 1e-3;

/// Probabilities are clamped to [ε, 1 − ε] before taking log-odds.
pub const LOG_ODDS_CLAMP: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ExplainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Perturb(#[from] PerturbError),
    #[error("perturbation set is empty")]
    EmptyPerturbations,
    #[error("kernel `{0:?}` needs low-dimensional distances, which the perturbation set lacks")]
    MissingDistances(KernelKind),
    #[error("normal matrix is singular (rank {rank} of {size}); use a positive ridge penalty")]
    Singular { rank: usize, size: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("input has dimension {found}, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("target class {target} is out of range for {n_classes} outputs")]
    TargetOutOfRange { target: usize, n_classes: usize },
    #[error("ground-truth feature set is empty")]
    EmptyGroundTruth,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    /// exp(−D_r²/σ²) on the low-dimensional distances of the set.
    ExponentialLowdim,
    /// exp(−‖x0 − x̃‖²/σ²).
    ExponentialAmbient,
    Uniform,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    /// Kernel width σ; `None` uses the median distance.
    #[serde(default)]
    pub width: Option<f64>,
}

impl KernelSpec {
    pub fn uniform() -> Self {
        Self {
            kind: KernelKind::Uniform,
            width: None,
        }
    }

    pub fn exponential_lowdim(width: Option<f64>) -> Self {
        Self {
            kind: KernelKind::ExponentialLowdim,
            width,
        }
    }

    pub fn exponential_ambient(width: Option<f64>) -> Self {
        Self {
            kind: KernelKind::ExponentialAmbient,
            width,
        }
    }

    /// Kernel values and the width actually used.
    pub fn weights(&self, distances: &[f64]) -> Result<(Vec<f64>, f64), ExplainError> {
        if self.kind == KernelKind::Uniform {
            return Ok((vec![1.0; distances.len()], f64::INFINITY));
        }
        let sigma = match self.width {
            Some(w) if w > 0.0 => w,
            Some(w) => {
                return Err(ExplainError::InvalidParameter(format!(
                    "kernel width must be positive, got {w}"
                )))
            }
            None => {
                let m = median(distances);
                if m > 0.0 {
                    m
                } else {
                    1.0
                }
            }
        };
        Ok((
            distances.iter().map(|d| (-(d * d) / (sigma * sigma)).exp()).collect(),
            sigma,
        ))
    }
}

fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        (s[n / 2 - 1] + s[n / 2]) / 2.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    #[serde(rename = "weights")]
    pub feature_weights: Vec<f64>,
    pub intercept: f64,
    /// Kernel width used (infinite for the uniform kernel).
    #[serde(rename = "sigma", with = "inf_as_null")]
    pub kernel_width: f64,
    pub scheme: String,
    pub target_class: usize,
}

mod inf_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

impl Explanation {
    /// Coefficients of the fitted surrogate on x0 − x̃.
    pub fn delta_coefficients(&self) -> Vec<f64> {
        self.feature_weights.iter().map(|w| -w).collect()
    }
}

/// Scheme tag of a perturbation set: `emap` when it carries low-dimensional
/// distances, otherwise the perturbation kind.
pub fn scheme_tag(perts: &PerturbationSet) -> String {
    if perts.low_dim_distances.is_some() {
        "emap".to_string()
    } else {
        perts.scheme.kind.name().to_string()
    }
}

fn rows(perts: &PerturbationSet) -> Vec<Vec<f64>> {
    perts.points.points().map(<[f64]>::to_vec).collect()
}

/// Target class: the given one, or the argmax of f(x0).
fn resolve_target(
    model: &dyn BlackBoxModel,
    x0: &[f64],
    target: Option<usize>,
) -> Result<(usize, Vec<f64>), ExplainError> {
    let f0 = model.predict_one(x0)?;
    let t = target.unwrap_or_else(|| argmax(&f0));
    if t >= f0.len() {
        return Err(ExplainError::TargetOutOfRange {
            target: t,
            n_classes: f0.len(),
        });
    }
    Ok((t, f0))
}

pub fn lime_explain(
    model: &dyn BlackBoxModel,
    x0: &[f64],
    perts: &PerturbationSet,
    kernel: &KernelSpec,
    ridge: f64,
    target_class: Option<usize>,
) -> Result<Explanation, ExplainError> {
    if perts.is_empty() {
        return Err(ExplainError::EmptyPerturbations);
    }
    if !(ridge >= 0.0) {
        return Err(ExplainError::InvalidParameter(format!(
            "ridge must be non-negative, got {ridge}"
        )));
    }
    let n = x0.len();
    if perts.points.dim() != n {
        return Err(ExplainError::DimensionMismatch {
            expected: n,
            found: perts.points.dim(),
        });
    }
    let (target, _) = resolve_target(model, x0, target_class)?;
    let rows = rows(perts);
    let outputs = model.predict(&rows)?;
    let y: Vec<f64> = outputs.iter().map(|o| o[target]).collect();

    let distances: Vec<f64> = match kernel.kind {
        KernelKind::ExponentialLowdim => perts
            .low_dim_distances
            .clone()
            .ok_or(ExplainError::MissingDistances(kernel.kind))?,
        _ => rows.iter().map(|r| euclidean(x0, r)).collect(),
    };
    let (pi, sigma) = kernel.weights(&distances)?;

    // normal equations on [1, x0 − x̃]
    let p = n + 1;
    let mut a = DMatrix::<f64>::zeros(p, p);
    let mut rhs = DVector::<f64>::zeros(p);
    let mut z = vec![0.0; p];
    for ((row, &yi), &w) in rows.iter().zip(&y).zip(&pi) {
        z[0] = 1.0;
        for (zj, (a, b)) in z[1..].iter_mut().zip(x0.iter().zip(row)) {
            *zj = a - b;
        }
        for i in 0..p {
            let wi = w * z[i];
            if wi == 0.0 {
                continue;
            }
            rhs[i] += wi * yi;
            for j in i..p {
                a[(i, j)] += wi * z[j];
            }
        }
    }
    for i in 0..p {
        for j in 0..i {
            a[(i, j)] = a[(j, i)];
        }
    }
    for i in 1..p {
        a[(i, i)] += ridge;
    }

    let beta = if ridge == 0.0 {
        let svd = a.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let tol = smax * p as f64 * f64::EPSILON;
        let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
        if rank < p || smax == 0.0 {
            return Err(ExplainError::Singular { rank, size: p });
        }
        a.lu().solve(&rhs).ok_or(ExplainError::Singular { rank, size: p })?
    } else {
        match a.clone().cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => a.lu().solve(&rhs).ok_or(ExplainError::Singular { rank: 0, size: p })?,
        }
    };

    Ok(Explanation {
        feature_weights: beta.iter().skip(1).map(|b| -b).collect(),
        intercept: beta[0],
        kernel_width: sigma,
        scheme: scheme_tag(perts),
        target_class: target,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LogOdds {
    pub score: f64,
    /// Whether either probability had to be clamped.
    pub clamped: bool,
    pub erased: usize,
}

/// Features with strictly positive weight, largest first (lower index on
/// ties), limited to ⌈top_fraction · N⌉.
pub fn top_positive_features(weights: &[f64], top_fraction: f64) -> Vec<usize> {
    let budget = (top_fraction * weights.len() as f64).ceil() as usize;
    let mut idx: Vec<usize> = (0..weights.len()).filter(|&i| weights[i] > 0.0).collect();
    idx.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]).then(a.cmp(&b)));
    idx.truncate(budget);
    idx
}

fn logit(p: f64) -> (f64, bool) {
    let c = p.clamp(LOG_ODDS_CLAMP, 1.0 - LOG_ODDS_CLAMP);
    ((c / (1.0 - c)).ln(), c != p)
}

/// Drop in the target class log-odds after setting the top-weighted
/// features of `x0` to `baseline`. Higher is better.
pub fn log_odds_score(
    model: &dyn BlackBoxModel,
    x0: &[f64],
    expl: &Explanation,
    top_fraction: f64,
    baseline: f64,
) -> Result<LogOdds, ExplainError> {
    if !(top_fraction > 0.0 && top_fraction <= 1.0) {
        return Err(ExplainError::InvalidParameter(format!(
            "top_fraction must be in (0, 1], got {top_fraction}"
        )));
    }
    if expl.feature_weights.len() != x0.len() {
        return Err(ExplainError::DimensionMismatch {
            expected: x0.len(),
            found: expl.feature_weights.len(),
        });
    }
    let erase = top_positive_features(&expl.feature_weights, top_fraction);
    let mut erased = x0.to_vec();
    for &i in &erase {
        erased[i] = baseline;
    }
    let out = model.predict(&[x0.to_vec(), erased])?;
    let t = expl.target_class;
    if t >= out[0].len() {
        return Err(ExplainError::TargetOutOfRange {
            target: t,
            n_classes: out[0].len(),
        });
    }
    let (l0, c0) = logit(out[0][t]);
    let (l1, c1) = logit(out[1][t]);
    Ok(LogOdds {
        score: l0 - l1,
        clamped: c0 || c1,
        erased: erase.len(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Infidelity {
    pub mean: f64,
    pub std_error: f64,
}

/// Monte-Carlo estimate of E[(Iᵀg − (f(x0) − f(x0 − I)))²] with
/// I ~ N(0, (radius²/N) I). Lower is better.
pub fn infidelity_score(
    model: &dyn BlackBoxModel,
    x0: &[f64],
    expl: &Explanation,
    radius: f64,
    n_draws: usize,
    seed: Seed,
) -> Result<Infidelity, ExplainError> {
    if n_draws == 0 {
        return Err(ExplainError::InvalidParameter("n_draws must be at least 1".into()));
    }
    let n = x0.len();
    if expl.feature_weights.len() != n {
        return Err(ExplainError::DimensionMismatch {
            expected: n,
            found: expl.feature_weights.len(),
        });
    }
    let mut rng = seed.rng();
    let draws: Vec<Vec<f64>> = (0..n_draws).map(|_| gaussian_vector(&mut rng, n, radius)).collect();
    let mut batch = Vec::with_capacity(n_draws + 1);
    batch.push(x0.to_vec());
    batch.extend(
        draws
            .iter()
            .map(|d| x0.iter().zip(d).map(|(a, b)| a - b).collect::<Vec<f64>>()),
    );
    let out = model.predict(&batch)?;
    let t = expl.target_class;
    let f0 = out[0][t];
    let terms: Vec<f64> = draws
        .iter()
        .zip(&out[1..])
        .map(|(d, o)| {
            let pred: f64 = d.iter().zip(&expl.feature_weights).map(|(a, b)| a * b).sum();
            let e = pred - (f0 - o[t]);
            e * e
        })
        .collect();
    let mean = terms.iter().sum::<f64>() / n_draws as f64;
    let std_error = if n_draws > 1 {
        let var = terms.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / (n_draws - 1) as f64;
        (var / n_draws as f64).sqrt()
    } else {
        0.0
    };
    Ok(Infidelity { mean, std_error })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PrecisionRecall {
    pub precision: f64,
    pub recall: f64,
}

/// Indices of the `k` largest |weights|, lower index first on ties.
pub fn top_k_features(weights: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..weights.len()).collect();
    idx.sort_by(|&a, &b| weights[b].abs().total_cmp(&weights[a].abs()).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

pub fn precision_recall(expl: &Explanation, truth: &[usize], top_k: usize) -> Result<PrecisionRecall, ExplainError> {
    if truth.is_empty() {
        return Err(ExplainError::EmptyGroundTruth);
    }
    if top_k == 0 {
        return Err(ExplainError::InvalidParameter("top_k must be at least 1".into()));
    }
    let top = top_k_features(&expl.feature_weights, top_k);
    let overlap = top.iter().filter(|i| truth.contains(i)).count() as f64;
    Ok(PrecisionRecall {
        precision: overlap / top_k as f64,
        recall: overlap / truth.len() as f64,
    })
}

/// LIME-style baseline perturbations around `x0`.
///
/// Gaussian draws x0 + N(0, (r²/N) I). The masking schemes pick, per
/// sample, a number of features uniformly in 1..=N and then that many
/// features uniformly; the chosen features are zeroed or scaled by U[0, 1].
pub fn baseline_perturbations(
    x0: &[f64],
    scheme: &PerturbationScheme,
    k: usize,
    seed: Seed,
) -> Result<PerturbationSet, ExplainError> {
    let n = x0.len();
    let mut rng = seed.rng();
    let mut rows = Vec::with_capacity(k);
    for _ in 0..k {
        let row = match scheme.kind {
            PerturbationKind::Gaussian => {
                let g = gaussian_vector(&mut rng, n, scheme.radius);
                x0.iter().zip(g).map(|(a, b)| a + b).collect()
            }
            kind if kind.is_mask() => {
                let count = rng.random_range(1..=n);
                let mut mask = vec![false; n];
                for i in index::sample(&mut rng, n, count) {
                    mask[i] = true;
                }
                apply_mask(&mut rng, kind, x0, &mask)?
            }
            kind => {
                return Err(ExplainError::InvalidParameter(format!(
                    "`{kind}` is not a baseline scheme (use the EMaP sampler)"
                )))
            }
        };
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(ExplainError::EmptyPerturbations);
    }
    let mut set = PerturbationSet::around(x0, rows, *scheme)?;
    set.seed = Some(seed);
    Ok(set)
}
