//! Perturbation schemes and the EMaP sampler.
//!
//! Gaussian noise is N(0, (r²/N) I). Projection and orthogonal schemes keep
//! the in-subspace or the complementary part of that draw and rescale it back
//! to the drawn norm, so all three move a point by the same distance for a
//! given draw. The EMaP sampler instead uses the raw orthogonal residual
//! x + n − Proj(n) around each pivot.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{euclidean, gaussian_vector, write_csv, GeometryError, PointCloud, Seed};
use crate::manifold::{
    default_k_t, fit_local_subspace, fit_mapper, project_vector, LocalSubspace, ManifoldError, Mapper, MapperKind,
};

/// Redraws allowed when a projected draw has zero norm.
pub const MAX_REDRAWS: usize = 100;

#[derive(Debug, Error)]
pub enum PerturbError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Manifold(#[from] ManifoldError),
    #[error("radius must be finite and non-negative, got {0}")]
    InvalidRadius(f64),
    #[error("scheme `{0}` needs a subspace basis")]
    MissingSubspace(PerturbationKind),
    #[error("scheme `{0}` needs a feature mask")]
    MissingMask(PerturbationKind),
    #[error("scheme `{0}` is not a noise scheme")]
    NotNoise(PerturbationKind),
    #[error("expected dimension {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("projected noise was zero in {0} consecutive draws")]
    ZeroResidual(usize),
    #[error("training cloud has no labels")]
    Unlabelled,
    #[error("label {label} has {have} points, {need} pivots requested")]
    NotEnoughPoints { label: usize, have: usize, need: usize },
    #[error("unknown perturbation scheme `{0}`")]
    UnknownScheme(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationKind {
    Gaussian,
    Projection,
    Orthogonal,
    ZeroMask,
    MultiplicativeUniform,
}

impl PerturbationKind {
    pub const ALL: [PerturbationKind; 5] = [
        PerturbationKind::Gaussian,
        PerturbationKind::Projection,
        PerturbationKind::Orthogonal,
        PerturbationKind::ZeroMask,
        PerturbationKind::MultiplicativeUniform,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            PerturbationKind::Gaussian => "gaussian",
            PerturbationKind::Projection => "projection",
            PerturbationKind::Orthogonal => "orthogonal",
            PerturbationKind::ZeroMask => "zero_mask",
            PerturbationKind::MultiplicativeUniform => "multiplicative_uniform",
        }
    }

    pub fn needs_subspace(&self) -> bool {
        matches!(self, PerturbationKind::Projection | PerturbationKind::Orthogonal)
    }

    pub fn is_mask(&self) -> bool {
        matches!(
            self,
            PerturbationKind::ZeroMask | PerturbationKind::MultiplicativeUniform
        )
    }
}

impl fmt::Display for PerturbationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PerturbationKind {
    type Err = PerturbError;

    fn from_str(s: &str) -> Result<Self, PerturbError> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| PerturbError::UnknownScheme(s.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationScheme {
    pub kind: PerturbationKind,
    /// Expected per-point displacement norm.
    pub radius: f64,
}

impl PerturbationScheme {
    pub fn new(kind: PerturbationKind, radius: f64) -> Result<Self, PerturbError> {
        if !(radius.is_finite() && radius >= 0.0) {
            return Err(PerturbError::InvalidRadius(radius));
        }
        Ok(Self { kind, radius })
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|c| c * c).sum::<f64>().sqrt()
}

/// One displacement vector of a noise scheme.
///
/// `basis` is an N × V matrix with orthonormal columns. With `radius == 0`
/// no randomness is consumed.
pub fn displacement<R: Rng + ?Sized>(
    rng: &mut R,
    kind: PerturbationKind,
    dim: usize,
    radius: f64,
    basis: Option<&DMatrix<f64>>,
) -> Result<Vec<f64>, PerturbError> {
    if radius == 0.0 {
        return Ok(vec![0.0; dim]);
    }
    match kind {
        PerturbationKind::Gaussian => Ok(gaussian_vector(rng, dim, radius)),
        PerturbationKind::Projection | PerturbationKind::Orthogonal => {
            let basis = basis.ok_or(PerturbError::MissingSubspace(kind))?;
            if basis.nrows() != dim {
                return Err(PerturbError::DimensionMismatch {
                    expected: dim,
                    found: basis.nrows(),
                });
            }
            for _ in 0..MAX_REDRAWS {
                let g = gaussian_vector(rng, dim, radius);
                let p = project_vector(basis, &g);
                let kept: Vec<f64> = if kind == PerturbationKind::Projection {
                    p
                } else {
                    g.iter().zip(&p).map(|(a, b)| a - b).collect()
                };
                let len = norm(&kept);
                if len > 0.0 {
                    let scale = norm(&g) / len;
                    return Ok(kept.into_iter().map(|c| c * scale).collect());
                }
            }
            Err(PerturbError::ZeroResidual(MAX_REDRAWS))
        }
        k => Err(PerturbError::NotNoise(k)),
    }
}

/// Applies a masking baseline to `x`: masked features are zeroed
/// (`zero_mask`) or multiplied by U[0, 1] noise (`multiplicative_uniform`).
pub fn apply_mask<R: Rng + ?Sized>(
    rng: &mut R,
    kind: PerturbationKind,
    x: &[f64],
    mask: &[bool],
) -> Result<Vec<f64>, PerturbError> {
    if mask.len() != x.len() {
        return Err(PerturbError::DimensionMismatch {
            expected: x.len(),
            found: mask.len(),
        });
    }
    match kind {
        PerturbationKind::ZeroMask => Ok(x.iter().zip(mask).map(|(&v, &m)| if m { 0.0 } else { v }).collect()),
        PerturbationKind::MultiplicativeUniform => Ok(x
            .iter()
            .zip(mask)
            .map(|(&v, &m)| if m { v * rng.random::<f64>() } else { v })
            .collect()),
        k => Err(PerturbError::MissingMask(k)),
    }
}

/// Perturbs every point of `cloud` with one draw of a noise scheme. Draws are
/// taken point by point from the seed's stream, so two schemes run with the
/// same seed see the same underlying Gaussian draws.
pub fn perturb_cloud(
    cloud: &PointCloud,
    scheme: &PerturbationScheme,
    basis: Option<&DMatrix<f64>>,
    seed: Seed,
) -> Result<PointCloud, PerturbError> {
    if scheme.kind.is_mask() {
        return Err(PerturbError::MissingMask(scheme.kind));
    }
    let mut rng = seed.rng();
    let dim = cloud.dim();
    let mut coords = Vec::with_capacity(cloud.coords().len());
    for p in cloud.points() {
        let d = displacement(&mut rng, scheme.kind, dim, scheme.radius, basis)?;
        coords.extend(p.iter().zip(&d).map(|(a, b)| a + b));
    }
    Ok(cloud.with_coords(coords)?)
}

/// Applies a masking baseline with the same mask to every point.
pub fn perturb_cloud_masked(
    cloud: &PointCloud,
    kind: PerturbationKind,
    mask: &[bool],
    seed: Seed,
) -> Result<PointCloud, PerturbError> {
    let mut rng = seed.rng();
    let mut coords = Vec::with_capacity(cloud.coords().len());
    for p in cloud.points() {
        coords.extend(apply_mask(&mut rng, kind, p, mask)?);
    }
    Ok(cloud.with_coords(coords)?)
}

/// `k` draws of x + n − Proj(n) around `x` using `local`'s basis, with the
/// low-dimensional distance of each draw to `reference` (ω of the explained
/// input).
fn orthogonal_draws(
    mapper: &Mapper,
    local: &LocalSubspace,
    x: &[f64],
    k: usize,
    r: f64,
    reference: &[f64],
    seed: Seed,
) -> Result<(Vec<Vec<f64>>, Vec<f64>), PerturbError> {
    let n = x.len();
    if local.ambient_dim() != n {
        return Err(PerturbError::DimensionMismatch {
            expected: n,
            found: local.ambient_dim(),
        });
    }
    let mut rng = seed.rng();
    let mut points = Vec::with_capacity(k);
    let mut dists = Vec::with_capacity(k);
    for _ in 0..k {
        let moved: Vec<f64> = if r == 0.0 {
            x.to_vec()
        } else {
            let g = gaussian_vector(&mut rng, n, r);
            let p = local.project_vector(&g);
            x.iter()
                .zip(g.iter().zip(&p))
                .map(|(xi, (gi, pi))| xi + (gi - pi))
                .collect()
        };
        dists.push(euclidean(&mapper.transform(&moved)?, reference));
        points.push(moved);
    }
    Ok((points, dists))
}

/// EMaP perturbations around a single point whose local subspace is already
/// fitted. Distances are measured in the low-dimensional space from ω(x).
pub fn gen_perturbation(
    mapper: &Mapper,
    local: &LocalSubspace,
    x: &[f64],
    k: usize,
    r: f64,
    seed: Seed,
) -> Result<(Vec<Vec<f64>>, Vec<f64>), PerturbError> {
    if !(r.is_finite() && r >= 0.0) {
        return Err(PerturbError::InvalidRadius(r));
    }
    let reference = mapper.transform(x)?;
    orthogonal_draws(mapper, local, x, k, r, &reference, seed)
}

/// A pivot of the EMaP sampler with its fitted subspace.
#[derive(Clone, Debug, PartialEq)]
pub struct Pivot {
    pub point: Vec<f64>,
    /// Index in the training cloud; `None` for the explained input.
    pub train_index: Option<usize>,
    pub subspace: Option<LocalSubspace>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PerturbationSet {
    pub points: PointCloud,
    /// Index into `pivots` for each row.
    pub pivot_index: Vec<usize>,
    pub pivots: Vec<Pivot>,
    /// D_r: low-dimensional distance of each row to the explained input.
    pub low_dim_distances: Option<Vec<f64>>,
    pub scheme: PerturbationScheme,
    pub seed: Option<Seed>,
}

impl PerturbationSet {
    /// A single-pivot set without low-dimensional distances. Errors when
    /// `rows` is empty.
    pub fn around(x0: &[f64], rows: Vec<Vec<f64>>, scheme: PerturbationScheme) -> Result<Self, PerturbError> {
        let n = rows.len();
        let points = PointCloud::from_rows(&rows)?;
        Ok(Self {
            points,
            pivot_index: vec![0; n],
            pivots: vec![Pivot {
                point: x0.to_vec(),
                train_index: None,
                subspace: None,
            }],
            low_dim_distances: None,
            scheme,
            seed: None,
        })
    }

    pub fn len(&self) -> usize {
        self.pivot_index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pivot_index.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.points.point(i)
    }

    pub fn sidecar(&self) -> serde_json::Value {
        serde_json::json!({
            "pivot_index": self.pivot_index,
            "D_r": self.low_dim_distances,
            "scheme": self.scheme.kind,
            "r": self.scheme.radius,
            "seed": self.seed,
        })
    }

    /// Writes the points as CSV and the metadata as a JSON sidecar.
    pub fn save(&self, csv_path: impl AsRef<Path>, json_path: impl AsRef<Path>) -> Result<(), PerturbError> {
        let file = std::fs::File::create(csv_path)?;
        write_csv(&self.points, std::io::BufWriter::new(file))?;
        let mut f = std::fs::File::create(json_path)?;
        serde_json::to_writer_pretty(&mut f, &self.sidecar())?;
        f.write_all(b"\n")?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmapParams {
    /// Pivots drawn per label (p).
    pub pivots_per_label: usize,
    /// Perturbations per pivot (k).
    pub per_pivot: usize,
    /// Low dimension V.
    pub low_dim: usize,
    /// Perturbation radius r.
    pub radius: f64,
    /// Noise samples for each local fit; defaults to `default_k_t(N)`.
    #[serde(default)]
    pub k_t: Option<usize>,
    /// Radius for the local fit; defaults to `radius`.
    #[serde(default)]
    pub r_t: Option<f64>,
}

/// The EMaP sampler: k·(p·l + 1) orthogonal perturbations around x0 and
/// around p training points of each of the l labels.
///
/// If `mapper` is `None` a linear PCA mapper is fitted on `train`.
pub fn emap_sample(
    train: &PointCloud,
    x0: &[f64],
    params: &EmapParams,
    mapper: Option<&Mapper>,
    seed: Seed,
) -> Result<PerturbationSet, PerturbError> {
    let n = train.dim();
    if x0.len() != n {
        return Err(PerturbError::DimensionMismatch {
            expected: n,
            found: x0.len(),
        });
    }
    let scheme = PerturbationScheme::new(PerturbationKind::Orthogonal, params.radius)?;
    let labels = train.labels().ok_or(PerturbError::Unlabelled)?;
    let fitted;
    let mapper = match mapper {
        Some(m) => m,
        None => {
            fitted = fit_mapper(train, params.low_dim, &MapperKind::LinearPca)?;
            &fitted
        }
    };
    if mapper.ambient_dim() != n || mapper.low_dim() >= n {
        return Err(ManifoldError::LowDim {
            low_dim: mapper.low_dim(),
            ambient_dim: n,
        }
        .into());
    }

    let mut pivot_rng = seed.derive(1).rng();
    let mut pivots = vec![(x0.to_vec(), None)];
    for label in train.classes() {
        let members: Vec<usize> = (0..train.len()).filter(|&i| labels[i] == label).collect();
        if members.len() < params.pivots_per_label {
            return Err(PerturbError::NotEnoughPoints {
                label,
                have: members.len(),
                need: params.pivots_per_label,
            });
        }
        for pick in rand::seq::index::sample(&mut pivot_rng, members.len(), params.pivots_per_label) {
            let idx = members[pick];
            pivots.push((train.point(idx).to_vec(), Some(idx)));
        }
    }

    let k_t = params.k_t.unwrap_or_else(|| default_k_t(n));
    let r_t = params.r_t.unwrap_or(params.radius);
    let reference = mapper.transform(x0)?;
    let total = params.per_pivot * pivots.len();
    let mut coords = Vec::with_capacity(total * n);
    let mut pivot_index = Vec::with_capacity(total);
    let mut dists = Vec::with_capacity(total);
    let mut out_pivots = Vec::with_capacity(pivots.len());
    for (j, (point, train_index)) in pivots.into_iter().enumerate() {
        let local = fit_local_subspace(mapper, &point, k_t, r_t, seed.derive(1_000 + j as u64))?;
        let (rows, d) = orthogonal_draws(
            mapper,
            &local,
            &point,
            params.per_pivot,
            params.radius,
            &reference,
            seed.derive(2_000 + j as u64),
        )?;
        for row in rows {
            coords.extend(row);
        }
        pivot_index.extend(std::iter::repeat_n(j, d.len()));
        dists.extend(d);
        out_pivots.push(Pivot {
            point,
            train_index,
            subspace: Some(local),
        });
    }

    Ok(PerturbationSet {
        points: PointCloud::new(n, coords)?,
        pivot_index,
        pivots: out_pivots,
        low_dim_distances: Some(dists),
        scheme,
        seed: Some(seed),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn plane_basis() -> DMatrix<f64> {
        DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0])
    }

    fn labelled_plane(n: usize) -> PointCloud {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let rows: Vec<[f64; 3]> = (0..n)
            .map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 0.0])
            .collect();
        let labels = (0..n).map(|i| i % 3).collect();
        PointCloud::from_rows(&rows).unwrap().with_labels(labels).unwrap()
    }

    #[test]
    fn zero_radius_is_identity() {
        let c = labelled_plane(10);
        for kind in [
            PerturbationKind::Gaussian,
            PerturbationKind::Projection,
            PerturbationKind::Orthogonal,
        ] {
            let s = PerturbationScheme::new(kind, 0.0).unwrap();
            let out = perturb_cloud(&c, &s, Some(&plane_basis()), Seed::new(1, 2)).unwrap();
            assert_eq!(out, c);
        }
    }

    #[test]
    fn projection_and_orthogonal_on_plane() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let b = plane_basis();
        for _ in 0..100 {
            let mut r1 = rng.clone();
            let g = gaussian_vector(&mut r1, 3, 0.3);
            let o = displacement(&mut rng.clone(), PerturbationKind::Orthogonal, 3, 0.3, Some(&b)).unwrap();
            assert_eq!(o[0], 0.0);
            assert_eq!(o[1], 0.0);
            assert!((o[2].abs() - norm(&g)).abs() < 1e-15);
            let p = displacement(&mut rng.clone(), PerturbationKind::Projection, 3, 0.3, Some(&b)).unwrap();
            assert_eq!(p[2], 0.0);
            assert!((norm(&p) - norm(&g)).abs() < 1e-15);
            rng = r1;
        }
    }

    #[test]
    fn missing_inputs() {
        let c = labelled_plane(4);
        let s = PerturbationScheme::new(PerturbationKind::Orthogonal, 0.1).unwrap();
        assert!(matches!(
            perturb_cloud(&c, &s, None, Seed::new(0, 0)),
            Err(PerturbError::MissingSubspace(PerturbationKind::Orthogonal))
        ));
        let s = PerturbationScheme::new(PerturbationKind::ZeroMask, 0.1).unwrap();
        assert!(matches!(
            perturb_cloud(&c, &s, None, Seed::new(0, 0)),
            Err(PerturbError::MissingMask(_))
        ));
        assert!(PerturbationScheme::new(PerturbationKind::Gaussian, -1.0).is_err());
        // full-rank basis leaves nothing orthogonal
        let full = DMatrix::<f64>::identity(3, 3);
        let s = PerturbationScheme::new(PerturbationKind::Orthogonal, 0.1).unwrap();
        assert!(matches!(
            perturb_cloud(&c, &s, Some(&full), Seed::new(0, 0)),
            Err(PerturbError::ZeroResidual(MAX_REDRAWS))
        ));
    }

    #[test]
    fn masks() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let x = [0.5, 0.25, 1.0];
        let m = [true, false, true];
        assert_eq!(
            apply_mask(&mut rng, PerturbationKind::ZeroMask, &x, &m).unwrap(),
            vec![0.0, 0.25, 0.0]
        );
        let u = apply_mask(&mut rng, PerturbationKind::MultiplicativeUniform, &x, &m).unwrap();
        assert_eq!(u[1], 0.25);
        assert!((0.0..=0.5).contains(&u[0]) && (0.0..=1.0).contains(&u[2]));
        assert!(apply_mask(&mut rng, PerturbationKind::ZeroMask, &x, &m[..2]).is_err());
    }

    #[test]
    fn scheme_names_round_trip() {
        for k in PerturbationKind::ALL {
            assert_eq!(k.name().parse::<PerturbationKind>().unwrap(), k);
            assert_eq!(serde_json::to_string(&k).unwrap(), format!("\"{}\"", k.name()));
        }
        assert!("lime".parse::<PerturbationKind>().is_err());
    }

    fn params(p: usize, k: usize) -> EmapParams {
        EmapParams {
            pivots_per_label: p,
            per_pivot: k,
            low_dim: 2,
            radius: 0.05,
            k_t: None,
            r_t: None,
        }
    }

    #[test]
    fn emap_row_counts() {
        let c = labelled_plane(30);
        let x0 = [0.1, 0.2, 0.0];
        let set = emap_sample(&c, &x0, &params(2, 100), None, Seed::new(3, 0)).unwrap();
        assert_eq!(set.len(), 700);
        assert_eq!(set.points.len(), 700);
        assert_eq!(set.pivots.len(), 7);
        let set = emap_sample(&c, &x0, &params(0, 10), None, Seed::new(3, 0)).unwrap();
        assert_eq!(set.len(), 10);
        assert!(set.pivot_index.iter().all(|&p| p == 0));
        assert!(matches!(
            emap_sample(&c, &x0, &params(11, 1), None, Seed::new(3, 0)),
            Err(PerturbError::NotEnoughPoints { need: 11, .. })
        ));
    }

    #[test]
    fn emap_is_deterministic_and_orthogonal() {
        let c = labelled_plane(30);
        let x0 = [0.1, 0.2, 0.0];
        let a = emap_sample(&c, &x0, &params(1, 20), None, Seed::new(4, 1)).unwrap();
        let b = emap_sample(&c, &x0, &params(1, 20), None, Seed::new(4, 1)).unwrap();
        assert_eq!(a, b);
        for i in 0..a.len() {
            let pivot = &a.pivots[a.pivot_index[i]];
            let basis = &pivot.subspace.as_ref().unwrap().basis;
            for col in basis.column_iter() {
                let dot: f64 = a
                    .row(i)
                    .iter()
                    .zip(&pivot.point)
                    .zip(col.iter())
                    .map(|((x, p), b)| (x - p) * b)
                    .sum();
                assert!(dot.abs() < 1e-10);
            }
        }
        // on an exactly planar cloud the embedding ignores orthogonal moves
        let d = a.low_dim_distances.as_ref().unwrap();
        assert!(d[..20].iter().all(|&v| v < 1e-12));
    }

    #[test]
    fn gen_perturbation_zero_radius() {
        let c = labelled_plane(20);
        let m = fit_mapper(&c, 2, &MapperKind::LinearPca).unwrap();
        let x = c.point(0);
        let local = fit_local_subspace(&m, x, 20, 0.1, Seed::new(0, 0)).unwrap();
        let (pts, d) = gen_perturbation(&m, &local, x, 1, 0.0, Seed::new(0, 0)).unwrap();
        assert_eq!(pts, vec![x.to_vec()]);
        assert_eq!(d, vec![0.0]);
    }

    #[test]
    fn sidecar_fields() {
        let c = labelled_plane(12);
        let set = emap_sample(&c, &[0.0, 0.0, 0.0], &params(1, 2), None, Seed::new(8, 0)).unwrap();
        let v = set.sidecar();
        assert_eq!(v["pivot_index"].as_array().unwrap().len(), 8);
        assert_eq!(v["D_r"].as_array().unwrap().len(), 8);
        assert_eq!(v["scheme"], "orthogonal");
        assert_eq!(v["r"], 0.05);
        assert_eq!(v["seed"]["master"], 8);
        let dir = tempfile::tempdir().unwrap();
        set.save(dir.path().join("p.csv"), dir.path().join("p.json")).unwrap();
        let back = crate::geometry::load_csv(dir.path().join("p.csv")).unwrap();
        assert_eq!(back.coords(), set.points.coords());
    }
}
