use nalgebra::DMatrix;
use rand::seq::index;

use super::output::paired_win_rate;
use super::{base_meta, run_trials, summarize, DatasetSpec, ExperimentConfig, ExperimentError, RunOutput, TrialRecord};
use crate::geometry::{pairwise_distances, PointCloud, Seed, Shape};
use crate::manifold::{fit_mapper, MapperKind};
use crate::perturb::{perturb_cloud, PerturbationScheme};
use crate::tda::{
    normalized_bottleneck, rips_persistence, simplex_count, FiltrationParams, PersistenceDiagram, TdaError,
};

/// Orthonormal basis of the first `v` coordinate axes of R^n.
fn axis_basis(n: usize, v: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, v, |i, j| if i == j { 1.0 } else { 0.0 })
}

fn subsample(cloud: &PointCloud, m: usize, seed: Seed) -> Result<PointCloud, ExperimentError> {
    let mut idx = index::sample(&mut seed.rng(), cloud.len(), m).into_vec();
    idx.sort_unstable();
    let rows: Vec<&[f64]> = idx.iter().map(|&i| cloud.point(i)).collect();
    let mut out = PointCloud::from_rows(&rows)?.with_name(cloud.name().to_string());
    if let Some(labels) = cloud.labels() {
        out = out.with_labels(idx.iter().map(|&i| labels[i]).collect())?;
    }
    Ok(out)
}

enum Prepared {
    Ready {
        cloud: PointCloud,
        diagrams: Vec<PersistenceDiagram>,
    },
    Skipped(String),
}

/// The trial's cloud and its diagrams, falling back to a subsample when the
/// complex of the full cloud is over budget.
/// A cloud too large for an implicit full filtration counts as over budget
/// when its full complex is.
fn prepare(
    cloud: PointCloud,
    params: &FiltrationParams,
    fallback: Option<usize>,
    seed: Seed,
) -> Result<Prepared, ExperimentError> {
    let over_budget = |e: &TdaError| match e {
        TdaError::BudgetExceeded { .. } => true,
        TdaError::RadiusRequired { .. } => {
            simplex_count(&pairwise_distances(&cloud), f64::INFINITY, params.max_dimension) > params.simplex_budget
        }
        _ => false,
    };
    match rips_persistence(&cloud, params) {
        Ok(diagrams) => Ok(Prepared::Ready { cloud, diagrams }),
        Err(e) if over_budget(&e) => match fallback {
            Some(m) if m < cloud.len() => {
                let small = subsample(&cloud, m, seed)?;
                match rips_persistence(&small, params) {
                    Ok(diagrams) => Ok(Prepared::Ready { cloud: small, diagrams }),
                    Err(TdaError::BudgetExceeded { .. }) => Ok(Prepared::Skipped("skipped_budget".into())),
                    Err(e) => Err(e.into()),
                }
            }
            _ => Ok(Prepared::Skipped("skipped_budget".into())),
        },
        Err(e) => Err(e.into()),
    }
}

fn normalized(a: &PersistenceDiagram, b: &PersistenceDiagram, r: f64) -> Result<f64, ExperimentError> {
    if r == 0.0 {
        Ok(crate::tda::bottleneck_distance(a, b)?)
    } else {
        Ok(normalized_bottleneck(a, b, r)?)
    }
}

/// Paired Monte-Carlo comparison of perturbation schemes by the normalised
/// bottleneck distance between the H0/H1 diagrams of a cloud and of its
/// perturbation.
///
/// Synthetic clouds are perturbed relative to the exact plane (or line) of
/// their shape; CSV clouds relative to a global PCA subspace of dimension
/// `low_dim`. All schemes of a (trial, radius) use the same seed, so they
/// transform the same Gaussian draws.
pub fn run_bottleneck_comparison(config: &ExperimentConfig) -> Result<RunOutput, ExperimentError> {
    config.validate()?;
    let dataset = config.dataset.as_ref().expect("validated");
    let schemes = config.effective_schemes();
    let params = FiltrationParams {
        max_dimension: 1,
        max_radius: config.tda.max_radius,
        simplex_budget: config.tda.simplex_budget,
    };
    let master = Seed::new(config.seed, 0);

    // CSV data is fixed, so its basis is fitted once.
    let (fixed_cloud, fixed_basis, primary_dim) = match dataset {
        DatasetSpec::Synthetic(spec) => (None, None, if matches!(spec.shape, Shape::Line { .. }) { 0 } else { 1 }),
        DatasetSpec::Csv(_) => {
            let cloud = dataset.load(master)?;
            let v = config.low_dim.expect("validated");
            let mapper = fit_mapper(&cloud, v, &MapperKind::LinearPca)?;
            let basis = mapper.basis_matrix().expect("linear mapper");
            (Some(cloud), Some(basis), 1)
        }
    };

    let n_radii = config.radii.len();
    let per_trial = run_trials(config.workers, config.n_trials, |t| {
        let seed = Seed::new(config.seed, t as u64);
        let (cloud, basis) = match dataset {
            DatasetSpec::Synthetic(spec) => {
                let v = config.low_dim.unwrap_or(spec.shape.affine_dim());
                (spec.generate(seed.derive(1))?, axis_basis(spec.ambient_dim, v))
            }
            DatasetSpec::Csv(_) => (
                fixed_cloud.clone().expect("loaded"),
                fixed_basis.clone().expect("fitted"),
            ),
        };
        let mut rows = Vec::with_capacity(n_radii * schemes.len());
        let (cloud, base) = match prepare(cloud, &params, config.tda.budget_fallback_points, seed.derive(2))? {
            Prepared::Ready { cloud, diagrams } => (cloud, diagrams),
            Prepared::Skipped(status) => {
                for (ri, &r) in config.radii.iter().enumerate() {
                    for s in &schemes {
                        let mut rec = TrialRecord::new(t, seed, t * n_radii + ri, s.name(), r);
                        rec.status = status.clone();
                        rows.push(rec);
                    }
                }
                return Ok(rows);
            }
        };
        for (ri, &r) in config.radii.iter().enumerate() {
            let noise_seed = seed.derive(100 + ri as u64);
            for s in &schemes {
                let mut rec = TrialRecord::new(t, seed, t * n_radii + ri, s.name(), r);
                let scheme = PerturbationScheme::new(s.kind(), r)?;
                let moved = perturb_cloud(&cloud, &scheme, Some(&basis), noise_seed)?;
                match rips_persistence(&moved, &params) {
                    Ok(d) => {
                        rec.metrics.insert("h0_nb".into(), normalized(&base[0], &d[0], r)?);
                        rec.metrics.insert("h1_nb".into(), normalized(&base[1], &d[1], r)?);
                        rec.metrics.insert("n_points".into(), cloud.len() as f64);
                    }
                    Err(TdaError::BudgetExceeded { .. }) => rec.status = "skipped_budget".into(),
                    Err(e) => return Err(e.into()),
                }
                rows.push(rec);
            }
        }
        Ok(rows)
    })?;
    let records: Vec<TrialRecord> = per_trial.into_iter().flatten().collect();

    let mut summary = summarize(&records);
    let names: Vec<&str> = schemes.iter().map(|s| s.name()).collect();
    if names.contains(&"orthogonal") && names.contains(&"projection") {
        for metric in ["h0_nb", "h1_nb"] {
            summary.extend(paired_win_rate(&records, "orthogonal", "projection", metric));
        }
    }

    let skipped = records.iter().filter(|r| !r.is_ok()).count();
    let trials_skipped = (0..config.n_trials)
        .filter(|&t| records.iter().any(|r| r.trial == t && !r.is_ok()))
        .count();
    let full = records
        .iter()
        .filter_map(|r| r.metric("n_points"))
        .fold(0.0f64, f64::max);
    let reduced = match dataset {
        DatasetSpec::Synthetic(spec) => records
            .iter()
            .filter(|r| r.metric("n_points").is_some_and(|n| (n as usize) < spec.n_points))
            .map(|r| r.trial)
            .collect::<std::collections::BTreeSet<_>>()
            .len(),
        DatasetSpec::Csv(_) => 0,
    };
    let mut meta = base_meta(config)?;
    meta.insert("primary_homology".into(), primary_dim.into());
    let subspace = match dataset {
        DatasetSpec::Synthetic(_) => "true_plane",
        DatasetSpec::Csv(_) => "global_pca",
    };
    meta.insert("subspace".into(), subspace.into());
    meta.insert("rows_skipped".into(), skipped.into());
    meta.insert("trials_skipped".into(), trials_skipped.into());
    meta.insert("trials_reduced".into(), reduced.into());
    meta.insert("max_points_used".into(), (full as u64).into());
    meta.insert(
        "normalization".into(),
        "bottleneck distance divided by the perturbation radius (raw distance when r = 0)".into(),
    );
    Ok(RunOutput {
        records,
        summary,
        meta: meta.into(),
    })
}
