use rand::seq::index;
use rand::Rng;

use super::{base_meta, run_trials, summarize, ExperimentConfig, ExperimentError, RunOutput, Scheme, TrialRecord};
use crate::geometry::{gaussian_vector, PointCloud, Seed};
use crate::manifold::{default_k_t, fit_local_subspace, fit_mapper, MapperKind};
use crate::models::{argmax, train_l1_logistic, BlackBoxModel};
use crate::perturb::{apply_mask, gen_perturbation};

/// [x_1..x_N, x_i x_j for i <= j].
pub fn quadratic_features(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut out = Vec::with_capacity(n + n * (n + 1) / 2);
    out.extend_from_slice(x);
    for i in 0..n {
        for j in i..n {
            out.push(x[i] * x[j]);
        }
    }
    out
}

/// One perturbation of every point. Point i draws from its own seed, so the
/// Gaussian and EMaP positives start from the same Gaussian vector.
fn positives(
    scheme: Scheme,
    cloud: &PointCloud,
    r: f64,
    low_dim: usize,
    seed: Seed,
) -> Result<Vec<Vec<f64>>, ExperimentError> {
    let n = cloud.dim();
    let point_seed = |i: usize| seed.derive(10_000 + i as u64);
    match scheme {
        Scheme::Gaussian => Ok(cloud
            .points()
            .enumerate()
            .map(|(i, p)| {
                let g = gaussian_vector(&mut point_seed(i).rng(), n, r);
                p.iter().zip(g).map(|(a, b)| a + b).collect()
            })
            .collect()),
        Scheme::Emap if r == 0.0 => Ok(cloud.points().map(<[f64]>::to_vec).collect()),
        Scheme::Emap => {
            let mapper = fit_mapper(cloud, low_dim, &MapperKind::LinearPca)?;
            let k_t = default_k_t(n);
            cloud
                .points()
                .enumerate()
                .map(|(i, p)| {
                    let local = fit_local_subspace(&mapper, p, k_t, r, seed.derive(20_000 + i as u64))?;
                    let (mut rows, _) = gen_perturbation(&mapper, &local, p, 1, r, point_seed(i))?;
                    Ok(rows.pop().expect("one draw"))
                })
                .collect()
        }
        kind => cloud
            .points()
            .enumerate()
            .map(|(i, p)| {
                let mut rng = point_seed(i).rng();
                let count = rng.random_range(1..=n);
                let mut mask = vec![false; n];
                for j in index::sample(&mut rng, n, count) {
                    mask[j] = true;
                }
                Ok(apply_mask(&mut rng, kind.kind(), p, &mask)?)
            })
            .collect(),
    }
}

/// Train/test indices into a pool of `n` negatives followed by their `n`
/// perturbed twins. A point and its twin always land on the same side, so
/// the split is stratified and no near-duplicate crosses it.
fn twin_split(n: usize, fraction: f64, seed: Seed) -> (Vec<usize>, Vec<usize>) {
    let mut rng = seed.rng();
    let n_train = ((n as f64) * fraction).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let expand = |idx: &[usize]| idx.iter().flat_map(|&i| [i, n + i]).collect::<Vec<_>>();
    (expand(&order[..n_train]), expand(&order[n_train..]))
}

struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    fn fit(rows: &[Vec<f64>]) -> Self {
        let d = rows[0].len();
        let m = rows.len() as f64;
        let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / m).collect();
        let scale = (0..d)
            .map(|j| {
                let var = rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / m;
                if var > 0.0 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }
}

/// Trains a logistic discriminator to tell each scheme's perturbations
/// (positives) from the original points (negatives) and reports its test
/// TP and TN rates in percent. Rates near 50 mean the perturbations are
/// indistinguishable from the data.
pub fn run_discriminator_test(config: &ExperimentConfig) -> Result<RunOutput, ExperimentError> {
    config.validate()?;
    let dataset = config.dataset.as_ref().expect("validated");
    let settings = &config.discriminator;
    let schemes = config.effective_schemes();
    let r = config.radii[0];
    let per_trial = run_trials(config.workers, config.n_trials, |t| {
        let seed = Seed::new(config.seed, t as u64);
        let cloud = dataset.load(seed.derive(1))?;
        let n = cloud.len();
        let n_test = n - ((n as f64) * settings.train_fraction).round() as usize;
        if n < settings.min_per_class || n_test == 0 {
            return Err(ExperimentError::Config(format!(
                "pool too small: {n} points per class, need at least {}",
                settings.min_per_class
            )));
        }
        let low_dim = config.low_dim.unwrap_or(2);
        let (train_idx, test_idx) = twin_split(n, settings.train_fraction, seed.derive(30));
        let mut rows = Vec::with_capacity(schemes.len());
        for &scheme in &schemes {
            let pos = positives(scheme, &cloud, r, low_dim, seed.derive(2))?;
            let pool: Vec<Vec<f64>> = cloud
                .points()
                .map(<[f64]>::to_vec)
                .chain(pos)
                .map(|x| quadratic_features(&x))
                .collect();
            let label = |i: usize| usize::from(i >= n);
            let train_rows: Vec<Vec<f64>> = train_idx.iter().map(|&i| pool[i].clone()).collect();
            let std = Standardizer::fit(&train_rows);
            let train = PointCloud::from_rows(&train_rows.iter().map(|r| std.apply(r)).collect::<Vec<_>>())?
                .with_labels(train_idx.iter().map(|&i| label(i)).collect())?;
            let model = train_l1_logistic(&train, &settings.train, seed.derive(40))?.model;
            let test_rows: Vec<Vec<f64>> = test_idx.iter().map(|&i| std.apply(&pool[i])).collect();
            let pred = model.predict(&test_rows)?;
            let (mut tp, mut tn, mut np, mut nn) = (0usize, 0usize, 0usize, 0usize);
            for (&i, p) in test_idx.iter().zip(&pred) {
                let guess = argmax(p);
                if label(i) == 1 {
                    np += 1;
                    tp += usize::from(guess == 1);
                } else {
                    nn += 1;
                    tn += usize::from(guess == 0);
                }
            }
            let tp_rate = 100.0 * tp as f64 / np as f64;
            let tn_rate = 100.0 * tn as f64 / nn as f64;
            let mut rec = TrialRecord::new(t, seed, t, scheme.name(), r);
            rec.metrics.insert("tp_rate".into(), tp_rate);
            rec.metrics.insert("tn_rate".into(), tn_rate);
            rec.metrics.insert("tp_dev".into(), (tp_rate - 50.0).abs());
            rec.metrics
                .insert("accuracy".into(), 100.0 * (tp + tn) as f64 / (np + nn) as f64);
            rows.push(rec);
        }
        Ok(rows)
    })?;
    let records: Vec<TrialRecord> = per_trial.into_iter().flatten().collect();
    let summary = summarize(&records);
    let mut meta = base_meta(config)?;
    meta.insert(
        "discriminator".into(),
        "in-repo logistic regression on standardized quadratic features; stratified train/test split keeping each point with its perturbation".into(),
    );
    Ok(RunOutput {
        records,
        summary,
        meta: meta.into(),
    })
}
