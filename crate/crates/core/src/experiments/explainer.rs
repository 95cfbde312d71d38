use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{
    base_meta, run_trials, summarize, ExperimentConfig, ExperimentError, ExplainerSettings, ModelSource, RunOutput,
    Scheme, TrialRecord, DEFAULT_PERTURBATIONS,
};
use crate::explain::{
    baseline_perturbations, infidelity_score, lime_explain, log_odds_score, precision_recall, Explanation, KernelSpec,
};
use crate::geometry::{PointCloud, Seed};
use crate::manifold::{fit_mapper, Mapper, MapperKind};
use crate::models::{
    argmax, load_model, train_l1_logistic, BlackBoxModel, LogisticModel, StoredModel, SubprocessModel, DEFAULT_TIMEOUT,
};
use crate::perturb::{emap_sample, EmapParams, PerturbationScheme, PerturbationSet};

/// Radius used when the config gives none.
const DEFAULT_RADIUS: f64 = 1e-3;

/// Sparse binary classification data with a trained L1-logistic model.
#[derive(Clone, Debug)]
pub struct Testbed {
    pub train: PointCloud,
    /// Held-out points to explain.
    pub test: PointCloud,
    pub model: LogisticModel,
    /// Features with a non-zero trained weight.
    pub ground_truth: Vec<usize>,
    /// Features the labels were generated from.
    pub planted: Vec<usize>,
}

/// Binary features, active with probability `density`; the label depends
/// on `n_true_features` planted features with alternating signs.
pub fn sparse_testbed(settings: &ExplainerSettings, n_test: usize, seed: Seed) -> Result<Testbed, ExperimentError> {
    let n = settings.n_features;
    let mut rng = seed.derive(1).rng();
    let mut planted = index::sample(&mut rng, n, settings.n_true_features).into_vec();
    planted.sort_unstable();
    let coef: Vec<f64> = (0..planted.len())
        .map(|i| {
            let m = rng.random_range(1.0..2.0);
            if i % 2 == 0 {
                m
            } else {
                -m
            }
        })
        .collect();
    let bias = -settings.density * coef.iter().sum::<f64>();
    let mut draw = |count: usize| -> Result<PointCloud, ExperimentError> {
        let mut coords = Vec::with_capacity(count * n);
        let mut labels = Vec::with_capacity(count);
        for _ in 0..count {
            let x: Vec<f64> = (0..n)
                .map(|_| if rng.random_bool(settings.density) { 1.0 } else { 0.0 })
                .collect();
            let score: f64 = planted.iter().zip(&coef).map(|(&j, c)| c * x[j]).sum::<f64>() + bias;
            let noise: f64 = rng.sample(StandardNormal);
            labels.push(usize::from(score + 0.25 * noise > 0.0));
            coords.extend(x);
        }
        Ok(PointCloud::new(n, coords)?.with_labels(labels)?)
    };
    let train = draw(settings.n_train)?;
    let test = if n_test > 0 {
        draw(n_test)?
    } else {
        PointCloud::new(n, vec![0.0; n])?
    };
    if train.classes().len() < 2 {
        return Err(ExperimentError::Config(
            "testbed produced a single class; raise n_train".into(),
        ));
    }
    let trained = train_l1_logistic(&train, &settings.train, seed.derive(2))?;
    Ok(Testbed {
        train,
        test,
        ground_truth: trained.ground_truth,
        model: trained.model,
        planted,
    })
}

/// The model, training data and inputs of one trial.
struct Setup<'a> {
    model: &'a dyn BlackBoxModel,
    train: PointCloud,
    inputs: Vec<Vec<f64>>,
    truth: Option<Vec<usize>>,
}

/// Loads a model file or spawns a model process expecting `dim` features.
pub fn external_model(source: &ModelSource, dim: usize) -> Result<Box<dyn BlackBoxModel>, ExperimentError> {
    Ok(match source {
        ModelSource::File(path) => Box::new(load_model(path)?),
        ModelSource::Command(cmd) => Box::new(SubprocessModel::spawn(cmd, Some(dim), DEFAULT_TIMEOUT)?),
    })
}

fn perturbations(
    scheme: Scheme,
    config: &ExperimentConfig,
    setup: &Setup,
    mapper: Option<&Mapper>,
    x0: &[f64],
    radius: f64,
    seed: Seed,
) -> Result<PerturbationSet, ExperimentError> {
    let total = config.explainer.n_perturbations;
    match scheme {
        Scheme::Emap => {
            let l = setup.train.classes().len();
            let pivots = config.pivots_per_label * l + 1;
            let params = EmapParams {
                pivots_per_label: config.pivots_per_label,
                per_pivot: config.per_pivot.unwrap_or(total.div_ceil(pivots)),
                low_dim: config.low_dim.unwrap_or(2),
                radius,
                k_t: None,
                r_t: None,
            };
            Ok(emap_sample(&setup.train, x0, &params, mapper, seed)?)
        }
        other => Ok(baseline_perturbations(
            x0,
            &PerturbationScheme::new(other.kind(), radius)?,
            total,
            seed,
        )?),
    }
}

fn kernel_for(scheme: Scheme, settings: &ExplainerSettings) -> KernelSpec {
    if settings.uniform_kernel {
        KernelSpec::uniform()
    } else if scheme == Scheme::Emap {
        KernelSpec::exponential_lowdim(settings.kernel_width)
    } else {
        KernelSpec::exponential_ambient(settings.kernel_width)
    }
}

/// Explains one input `x0` of `model` under `scheme` with the settings of
/// `config` (radius, perturbation count, kernel, ridge, V, p). `data` is the
/// pivot pool for EMaP; unlabelled data is labelled by the model's argmax.
pub fn explain_input(
    model: &dyn BlackBoxModel,
    data: &PointCloud,
    x0: &[f64],
    scheme: Scheme,
    config: &ExperimentConfig,
    target_class: Option<usize>,
    seed: Seed,
) -> Result<Explanation, ExperimentError> {
    let radius = config.radii.first().copied().unwrap_or(DEFAULT_RADIUS);
    let train = match data.labels() {
        Some(_) => data.clone(),
        None => {
            let rows: Vec<Vec<f64>> = data.points().map(<[f64]>::to_vec).collect();
            let labels = model.predict(&rows)?.iter().map(|p| argmax(p)).collect();
            data.clone().with_labels(labels)?
        }
    };
    let setup = Setup {
        model,
        train,
        inputs: Vec::new(),
        truth: None,
    };
    let mapper = if scheme == Scheme::Emap {
        Some(fit_mapper(
            &setup.train,
            config.low_dim.unwrap_or(2),
            &MapperKind::LinearPca,
        )?)
    } else {
        None
    };
    let perts = perturbations(scheme, config, &setup, mapper.as_ref(), x0, radius, seed)?;
    let kernel = kernel_for(scheme, &config.explainer);
    Ok(lime_explain(
        model,
        x0,
        &perts,
        &kernel,
        config.explainer.ridge,
        target_class,
    )?)
}

/// Explains `inputs_per_trial` inputs per trial under every scheme and
/// records metrics averaged over the inputs: precision and recall at each
/// top-k against the model's non-zero features, and optionally log-odds
/// and infidelity.
///
/// Without an external model every trial trains a fresh sparse testbed.
pub fn run_explainer_eval(config: &ExperimentConfig) -> Result<RunOutput, ExperimentError> {
    config.validate()?;
    let settings = &config.explainer;
    let schemes = config.effective_schemes();
    let radius = config.radii.first().copied().unwrap_or(DEFAULT_RADIUS);
    let ipt = settings.inputs_per_trial;

    let external = match (&settings.model, &config.dataset) {
        (Some(source), Some(dataset)) => {
            let data = dataset.load(Seed::new(config.seed, 0).derive(1))?;
            let model = external_model(source, data.dim())?;
            if let Some(n) = model.n_features() {
                if n != data.dim() {
                    return Err(ExperimentError::Config(format!(
                        "model expects {n} features, dataset has {}",
                        data.dim()
                    )));
                }
            }
            let truth = match source {
                ModelSource::File(path) => match load_model(path)? {
                    StoredModel::Logistic(m) => Some(m.support()),
                    StoredModel::Linear(_) => None,
                },
                ModelSource::Command(_) => None,
            };
            Some((data, model, truth))
        }
        _ => None,
    };

    let per_trial = run_trials(config.workers, config.n_trials, |t| {
        let seed = Seed::new(config.seed, t as u64);
        if ipt == 0 {
            return Ok(Vec::new());
        }
        let testbed;
        let setup = match &external {
            None => {
                testbed = sparse_testbed(settings, ipt, seed)?;
                Setup {
                    model: &testbed.model,
                    train: testbed.train.clone(),
                    inputs: testbed.test.points().map(<[f64]>::to_vec).collect(),
                    truth: Some(testbed.ground_truth.clone()),
                }
            }
            Some((data, model, truth)) => {
                let rows: Vec<Vec<f64>> = data.points().map(<[f64]>::to_vec).collect();
                let train = match data.labels() {
                    Some(_) => data.clone(),
                    None => {
                        let labels = model.predict(&rows)?.iter().map(|p| argmax(p)).collect();
                        data.clone().with_labels(labels)?
                    }
                };
                let picks = index::sample(&mut seed.derive(3).rng(), rows.len(), ipt.min(rows.len()));
                Setup {
                    model: model.as_ref(),
                    train,
                    inputs: picks.iter().map(|i| rows[i].clone()).collect(),
                    truth: truth.clone(),
                }
            }
        };
        let truth = setup.truth.as_ref().filter(|t| !t.is_empty());
        let mapper = if schemes.contains(&Scheme::Emap) {
            Some(fit_mapper(
                &setup.train,
                config.low_dim.unwrap_or(2),
                &MapperKind::LinearPca,
            )?)
        } else {
            None
        };

        let mut rows = Vec::with_capacity(schemes.len());
        for &scheme in &schemes {
            let mut rec = TrialRecord::new(t, seed, t, scheme.name(), radius);
            let mut sums: std::collections::BTreeMap<String, f64> = Default::default();
            for (i, x0) in setup.inputs.iter().enumerate() {
                let input_seed = seed.derive(1_000 + i as u64);
                let perts = perturbations(
                    scheme,
                    config,
                    &setup,
                    mapper.as_ref(),
                    x0,
                    radius,
                    // keyed on the scheme, not its position in the list
                    input_seed.derive(scheme as u64),
                )?;
                let kernel = kernel_for(scheme, settings);
                let expl = lime_explain(setup.model, x0, &perts, &kernel, settings.ridge, None)?;
                let mut add = |name: String, v: f64| *sums.entry(name).or_insert(0.0) += v;
                add("n_perturbations".into(), perts.len() as f64);
                if let Some(truth) = truth {
                    for &k in &settings.top_k {
                        let pr = precision_recall(&expl, truth, k)?;
                        add(format!("precision_k{k}"), pr.precision);
                        add(format!("recall_k{k}"), pr.recall);
                    }
                }
                if settings.log_odds {
                    let lo = log_odds_score(setup.model, x0, &expl, settings.top_fraction, 0.0)?;
                    add("log_odds".into(), lo.score);
                }
                if settings.infidelity {
                    let inf = infidelity_score(
                        setup.model,
                        x0,
                        &expl,
                        radius,
                        settings.infidelity_draws,
                        input_seed.derive(99),
                    )?;
                    add("infidelity".into(), inf.mean);
                }
            }
            let m = setup.inputs.len() as f64;
            rec.metrics = sums.into_iter().map(|(k, v)| (k, v / m)).collect();
            if let Some(truth) = truth {
                rec.metrics.insert("support_size".into(), truth.len() as f64);
            }
            rows.push(rec);
        }
        Ok(rows)
    })?;
    let records: Vec<TrialRecord> = per_trial.into_iter().flatten().collect();
    let summary = summarize(&records);

    let mut meta = base_meta(config)?;
    let mut flags = Vec::new();
    if settings.n_perturbations < DEFAULT_PERTURBATIONS {
        flags.push(format!("below paper default {DEFAULT_PERTURBATIONS}"));
    }
    meta.insert("flags".into(), flags.into());
    meta.insert("radius".into(), radius.into());
    meta.insert(
        "ground_truth".into(),
        "features with |weight| > 1e-8 in the L1-logistic model; weights ranked by absolute value".into(),
    );
    Ok(RunOutput {
        records,
        summary,
        meta: meta.into(),
    })
}
