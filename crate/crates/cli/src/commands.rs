use std::path::{Path, PathBuf};

use emap_core::experiments::{
    explain_input, external_model, run_experiment, write_outputs, ExperimentConfig, ExperimentKind, ExplainerSettings,
    ModelSource, Scheme,
};
use emap_core::explain::baseline_perturbations;
use emap_core::geometry::{format_f64, load_csv, save_csv, PointCloud, Seed, SyntheticSpec};
use emap_core::gh::{default_generic_tol, discrete_gh, discrete_gh_checked, is_generic, lemma1_radius_bound, GhMode};
use emap_core::manifold::{fit_mapper, MapperKind};
use emap_core::perturb::{emap_sample, perturb_cloud, EmapParams, PerturbationScheme};
use emap_core::tda::{bottleneck_distance, rips_persistence, FiltrationParams};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::{CliError, Common};

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn read_value(path: &Path) -> Result<Value, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))
}

fn parse<T: DeserializeOwned>(value: Value, path: &Path) -> Result<T, CliError> {
    serde_json::from_value(value).map_err(|e| config_err(format!("{}: {e}", path.display())))
}

fn read_config<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    parse(read_value(path)?, path)
}

/// Input clouds named by a config; unreadable files are configuration errors.
fn load_input(path: &Path) -> Result<PointCloud, CliError> {
    load_csv(path).map_err(|e| config_err(format!("{}: {e}", path.display())))
}

fn no_trials(c: &Common, command: &str) -> Result<(), CliError> {
    match c.trials {
        Some(_) => Err(config_err(format!("--trials does not apply to `{command}`"))),
        None => Ok(()),
    }
}

fn write_meta(
    out: &Path,
    command: &str,
    seed: u64,
    config: &impl Serialize,
    extra: Map<String, Value>,
) -> Result<(), CliError> {
    let mut meta = Map::new();
    meta.insert("command".into(), command.into());
    meta.insert("version".into(), env!("CARGO_PKG_VERSION").into());
    meta.insert("seed".into(), seed.into());
    meta.insert("config".into(), serde_json::to_value(config)?);
    meta.extend(extra);
    write_json(&out.join("meta.json"), &Value::Object(meta))
}

fn write_json(path: &Path, value: &Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn out_dir(c: &Common) -> Result<&Path, CliError> {
    std::fs::create_dir_all(&c.out)?;
    Ok(&c.out)
}

#[derive(Debug, Serialize, Deserialize)]
struct SynthConfig {
    #[serde(flatten)]
    spec: SyntheticSpec,
    #[serde(default)]
    seed: Option<u64>,
}

pub fn synth(path: &Path, c: &Common) -> Result<(), CliError> {
    let cfg: SynthConfig = read_config(path)?;
    let seed = c.seed.or(cfg.seed).unwrap_or(0);
    let n = c.trials.unwrap_or(1);
    if n == 0 {
        return Err(config_err("--trials must be at least 1"));
    }
    let out = out_dir(c)?;
    let mut files = Vec::new();
    for t in 0..n {
        let cloud = cfg
            .spec
            .generate(Seed::new(seed, t as u64))
            .map_err(|e| config_err(e.to_string()))?;
        let name = if n == 1 {
            "points.csv".to_string()
        } else {
            format!("points_{t}.csv")
        };
        save_csv(&cloud, out.join(&name))?;
        files.push(name);
    }
    let mut extra = Map::new();
    extra.insert("files".into(), files.into());
    write_meta(out, "synth", seed, &cfg, extra)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PerturbConfig {
    input: PathBuf,
    scheme: Scheme,
    radius: f64,
    /// Subspace dimension for projection/orthogonal (global PCA) and EMaP.
    #[serde(default)]
    low_dim: Option<usize>,
    /// Perturb around this row instead of moving the whole cloud.
    #[serde(default)]
    x0_index: Option<usize>,
    #[serde(default = "default_count")]
    count: usize,
    #[serde(default = "one")]
    pivots_per_label: usize,
    #[serde(default)]
    seed: Option<u64>,
}

fn default_count() -> usize {
    1000
}

fn one() -> usize {
    1
}

pub fn perturb(path: &Path, c: &Common) -> Result<(), CliError> {
    no_trials(c, "perturb")?;
    let cfg: PerturbConfig = read_config(path)?;
    let seed = Seed::new(c.seed.or(cfg.seed).unwrap_or(0), 0);
    let scheme = PerturbationScheme::new(cfg.scheme.kind(), cfg.radius).map_err(|e| config_err(e.to_string()))?;
    let cloud = load_input(&cfg.input)?;
    let out = out_dir(c)?;
    let mut extra = Map::new();

    match cfg.x0_index {
        None => {
            let basis = match cfg.scheme {
                Scheme::Gaussian => None,
                Scheme::Projection | Scheme::Orthogonal => {
                    let v = cfg
                        .low_dim
                        .ok_or_else(|| config_err("projection/orthogonal need `low_dim` for the global subspace"))?;
                    let mapper =
                        fit_mapper(&cloud, v, &MapperKind::LinearPca).map_err(|e| config_err(e.to_string()))?;
                    mapper.basis_matrix()
                }
                other => {
                    return Err(config_err(format!(
                        "`{other}` perturbs around a single point; set `x0_index`"
                    )))
                }
            };
            let moved = perturb_cloud(&cloud, &scheme, basis.as_ref(), seed)?;
            save_csv(&moved, out.join("perturbed.csv"))?;
            extra.insert("files".into(), json!(["perturbed.csv"]));
        }
        Some(i) => {
            if i >= cloud.len() {
                return Err(config_err(format!(
                    "x0_index {i} is out of range for {} points",
                    cloud.len()
                )));
            }
            if cfg.count == 0 {
                return Err(config_err("`count` must be at least 1"));
            }
            let x0 = cloud.point(i).to_vec();
            let set = match cfg.scheme {
                Scheme::Emap => {
                    if cloud.labels().is_none() {
                        return Err(config_err("EMaP needs a labelled input (trailing `label` column)"));
                    }
                    let pivots = cfg.pivots_per_label * cloud.classes().len() + 1;
                    let params = EmapParams {
                        pivots_per_label: cfg.pivots_per_label,
                        per_pivot: cfg.count.div_ceil(pivots),
                        low_dim: cfg.low_dim.unwrap_or(2),
                        radius: cfg.radius,
                        k_t: None,
                        r_t: None,
                    };
                    emap_sample(&cloud, &x0, &params, None, seed)?
                }
                Scheme::Projection | Scheme::Orthogonal => {
                    return Err(config_err(
                        "around a single point use `emap` (orthogonal to the local subspace) or a baseline",
                    ))
                }
                _ => baseline_perturbations(&x0, &scheme, cfg.count, seed)?,
            };
            set.save(out.join("perturbations.csv"), out.join("perturbations.json"))?;
            extra.insert("files".into(), json!(["perturbations.csv", "perturbations.json"]));
            extra.insert("rows".into(), set.len().into());
        }
    }
    write_meta(out, "perturb", seed.master, &cfg, extra)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TdaConfig {
    input: PathBuf,
    /// Second cloud; bottleneck distances to `input` are reported.
    #[serde(default)]
    compare: Option<PathBuf>,
    /// Perturbation radius used to normalise the bottleneck distances.
    #[serde(default)]
    radius: Option<f64>,
    #[serde(default = "one")]
    max_dimension: usize,
    #[serde(default)]
    max_radius: Option<f64>,
    #[serde(default)]
    simplex_budget: Option<u64>,
}

pub fn tda(path: &Path, c: &Common) -> Result<(), CliError> {
    no_trials(c, "tda")?;
    let cfg: TdaConfig = read_config(path)?;
    let mut params = FiltrationParams::default().with_max_dimension(cfg.max_dimension);
    if let Some(r) = cfg.max_radius {
        params = params.with_max_radius(r);
    }
    if let Some(b) = cfg.simplex_budget {
        params = params.with_budget(b);
    }
    let mut clouds = vec![load_input(&cfg.input)?];
    if let Some(p) = &cfg.compare {
        clouds.push(load_input(p)?);
    }
    let diagrams = clouds
        .iter()
        .map(|cl| rips_persistence(cl, &params))
        .collect::<Result<Vec<_>, _>>()?;

    let out = out_dir(c)?;
    let mut text = String::from("cloud,dim,birth,death\n");
    for (ci, ds) in diagrams.iter().enumerate() {
        for d in ds {
            for p in &d.pairs {
                text.push_str(&format!(
                    "{ci},{},{},{}\n",
                    d.dimension,
                    format_f64(p.birth),
                    format_f64(p.death)
                ));
            }
        }
    }
    std::fs::write(out.join("diagrams.csv"), text)?;

    let mut extra = Map::new();
    if diagrams.len() == 2 {
        let mut bn = Map::new();
        for (a, b) in diagrams[0].iter().zip(&diagrams[1]) {
            let w = bottleneck_distance(a, b)?;
            bn.insert(format!("h{}", a.dimension), w.into());
            if let Some(r) = cfg.radius.filter(|&r| r > 0.0) {
                bn.insert(format!("h{}_normalized", a.dimension), (w / r).into());
            }
        }
        extra.insert("bottleneck".into(), bn.into());
    }
    write_meta(out, "tda", c.seed.unwrap_or(0), &cfg, extra)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum PairMode {
    BruteForce,
    IdentityFastPath,
    /// Identity fast path when the pair is inside the Lemma-1 regime,
    /// brute force otherwise.
    Checked,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GhPairConfig {
    x: PathBuf,
    y: PathBuf,
    #[serde(default = "checked")]
    mode: PairMode,
}

fn checked() -> PairMode {
    PairMode::Checked
}

pub fn gh(path: Option<&Path>, c: &Common) -> Result<(), CliError> {
    let value = match path {
        Some(p) => read_value(p)?,
        None => return experiment(None, Some(ExperimentKind::GhValidation), c),
    };
    if value.get("x").is_none() {
        return experiment(path, Some(ExperimentKind::GhValidation), c);
    }
    no_trials(c, "gh")?;
    let cfg: GhPairConfig = parse(value, path.expect("config present"))?;
    let (x, y) = (load_input(&cfg.x)?, load_input(&cfg.y)?);
    let result = match cfg.mode {
        PairMode::BruteForce => discrete_gh(&x, &y, GhMode::BruteForce)?,
        PairMode::IdentityFastPath => discrete_gh(&x, &y, GhMode::IdentityFastPath)?,
        PairMode::Checked => discrete_gh_checked(&x, &y)?,
    };
    let generic = is_generic(&x, default_generic_tol(&x));
    let bound = if generic { Some(lemma1_radius_bound(&x)?) } else { None };
    let out = out_dir(c)?;
    write_json(
        &out.join("gh.json"),
        &json!({
            "distance": result.distance,
            "permutation": result.optimal_permutation,
            "mode": result.mode,
            "x_generic": generic,
            "x_radius_bound": bound,
        }),
    )?;
    write_meta(out, "gh", c.seed.unwrap_or(0), &cfg, Map::new())
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExplainConfig {
    model: ModelSource,
    /// Points the input is taken from; also the EMaP pivot pool.
    data: PathBuf,
    row: usize,
    #[serde(default = "emap")]
    scheme: Scheme,
    #[serde(default)]
    radius: Option<f64>,
    #[serde(default)]
    target_class: Option<usize>,
    #[serde(default)]
    low_dim: Option<usize>,
    #[serde(default = "one")]
    pivots_per_label: usize,
    #[serde(default)]
    per_pivot: Option<usize>,
    #[serde(default)]
    explainer: ExplainerSettings,
    #[serde(default)]
    seed: Option<u64>,
}

fn emap() -> Scheme {
    Scheme::Emap
}

pub fn explain(path: &Path, c: &Common) -> Result<(), CliError> {
    no_trials(c, "explain")?;
    let cfg: ExplainConfig = read_config(path)?;
    let seed = c.seed.or(cfg.seed).unwrap_or(0);
    let data = load_input(&cfg.data)?;
    if cfg.row >= data.len() {
        return Err(config_err(format!(
            "row {} is out of range for {} points",
            cfg.row,
            data.len()
        )));
    }
    if cfg.explainer.n_perturbations == 0 {
        return Err(config_err("n_perturbations must be at least 1"));
    }
    let model = external_model(&cfg.model, data.dim()).map_err(|e| match e {
        emap_core::experiments::ExperimentError::Model(m) => CliError::Config(m.to_string()),
        other => other.into(),
    })?;

    let mut exp = ExperimentConfig::new(ExperimentKind::ExplainerEval);
    exp.radii = cfg.radius.into_iter().collect();
    exp.low_dim = cfg.low_dim;
    exp.pivots_per_label = cfg.pivots_per_label;
    exp.per_pivot = cfg.per_pivot;
    exp.explainer = cfg.explainer.clone();
    let x0 = data.point(cfg.row).to_vec();
    let expl = explain_input(
        model.as_ref(),
        &data,
        &x0,
        cfg.scheme,
        &exp,
        cfg.target_class,
        Seed::new(seed, 0),
    )?;

    let out = out_dir(c)?;
    write_json(&out.join("explanation.json"), &serde_json::to_value(&expl)?)?;
    write_meta(out, "explain", seed, &cfg, Map::new())
}

/// Runs an experiment config. `forced` fills in a missing `experiment` field
/// and rejects a different one.
pub fn experiment(path: Option<&Path>, forced: Option<ExperimentKind>, c: &Common) -> Result<(), CliError> {
    let default_kind = forced.unwrap_or(ExperimentKind::ExplainerEval);
    let mut value = match path {
        Some(p) => read_value(p)?,
        None => json!({}),
    };
    let obj = value
        .as_object_mut()
        .ok_or_else(|| config_err("experiment config must be a JSON object"))?;
    match obj.get("experiment").and_then(Value::as_str) {
        None => {
            obj.insert("experiment".into(), default_kind.name().into());
        }
        Some(name) => {
            if let Some(kind) = forced.filter(|k| k.name() != name) {
                return Err(config_err(format!(
                    "config is a `{name}` experiment; this command runs `{}`",
                    kind.name()
                )));
            }
        }
    }
    let mut cfg = ExperimentConfig::from_json(&value.to_string())?;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(t) = c.trials {
        cfg.n_trials = t;
    }
    cfg.workers = c.workers.or(cfg.workers);
    cfg.out_dir = Some(c.out.clone());
    let output = run_experiment(&cfg)?;
    write_outputs(&output, &c.out)?;
    Ok(())
}
