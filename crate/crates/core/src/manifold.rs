//! Mappers from R^N to a low-dimensional space R^V, and local affine
//! subspaces fitted around a point by regressing noisy neighbours on their
//! low-dimensional coordinates.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{euclidean, gaussian_vector, PointCloud, Seed};

/// Softening term in inverse-distance weights.
pub const IDW_EPS: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum ManifoldError {
    #[error("low dimension must satisfy 1 <= V < N (V = {low_dim}, N = {ambient_dim})")]
    LowDim { low_dim: usize, ambient_dim: usize },
    #[error("need more than V = {low_dim} training points, got {n}")]
    TooFewPoints { n: usize, low_dim: usize },
    #[error("embedding has {found} rows for {expected} training points")]
    EmbeddingRows { expected: usize, found: usize },
    #[error("embedding rows have {found} columns, expected {expected}")]
    EmbeddingDim { expected: usize, found: usize },
    #[error("point has dimension {found}, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("k_T = {k_t} noise samples cannot fit a {low_dim}-dimensional subspace")]
    TooFewSamples { k_t: usize, low_dim: usize },
    #[error("radius must be positive, got {0}")]
    NonPositiveRadius(f64),
    #[error("low-dimensional sample matrix has rank {rank}, need {needed}")]
    RankDeficient { rank: usize, needed: usize },
    #[error("k_nn must be at least 1")]
    ZeroNeighbours,
}

#[derive(Clone, Debug, PartialEq)]
pub enum MapperKind {
    /// Mean-centring plus the top-V principal directions.
    LinearPca,
    /// Externally computed coordinates (one row per training point),
    /// extended to new points by inverse-distance weighting of the `k_nn`
    /// nearest training points.
    FileEmbedding { embedding: PointCloud, k_nn: usize },
}

/// A fitted map ω: R^N → R^V.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Mapper {
    LinearPca {
        ambient_dim: usize,
        low_dim: usize,
        mean: Vec<f64>,
        /// V orthonormal columns of length N.
        basis: Vec<Vec<f64>>,
    },
    FileEmbedding {
        ambient_dim: usize,
        low_dim: usize,
        train: Vec<Vec<f64>>,
        coords: Vec<Vec<f64>>,
        k_nn: usize,
    },
}

pub fn fit_mapper(train: &PointCloud, low_dim: usize, kind: &MapperKind) -> Result<Mapper, ManifoldError> {
    let (n, ambient_dim) = (train.len(), train.dim());
    if low_dim == 0 || low_dim >= ambient_dim {
        return Err(ManifoldError::LowDim { low_dim, ambient_dim });
    }
    if n <= low_dim {
        return Err(ManifoldError::TooFewPoints { n, low_dim });
    }
    match kind {
        MapperKind::LinearPca => {
            let x = train.to_matrix();
            let mean = x.row_mean().transpose();
            let mut centered = x;
            for mut row in centered.row_iter_mut() {
                row -= mean.transpose();
            }
            let svd = centered.svd(false, true);
            let v_t = svd.v_t.expect("requested V^T");
            let mut cols: Vec<DVector<f64>> = (0..low_dim.min(v_t.nrows())).map(|i| v_t.row(i).transpose()).collect();
            // zero singular directions may come back unnormalised; rebuild
            cols = orthonormal_columns(&cols, ambient_dim, low_dim).expect("completion always succeeds");
            for c in &mut cols {
                let (idx, _) = c.iamax_full();
                if c[idx] < 0.0 {
                    c.neg_mut();
                }
            }
            Ok(Mapper::LinearPca {
                ambient_dim,
                low_dim,
                mean: mean.as_slice().to_vec(),
                basis: cols.iter().map(|c| c.as_slice().to_vec()).collect(),
            })
        }
        MapperKind::FileEmbedding { embedding, k_nn } => {
            if embedding.len() != n {
                return Err(ManifoldError::EmbeddingRows {
                    expected: n,
                    found: embedding.len(),
                });
            }
            if embedding.dim() != low_dim {
                return Err(ManifoldError::EmbeddingDim {
                    expected: low_dim,
                    found: embedding.dim(),
                });
            }
            if *k_nn == 0 {
                return Err(ManifoldError::ZeroNeighbours);
            }
            Ok(Mapper::FileEmbedding {
                ambient_dim,
                low_dim,
                train: train.points().map(<[f64]>::to_vec).collect(),
                coords: embedding.points().map(<[f64]>::to_vec).collect(),
                k_nn: *k_nn,
            })
        }
    }
}

/// Gram-Schmidt (applied twice) on `cols`, dropping numerically dependent
/// vectors and completing with coordinate axes up to `want` columns.
/// Returns `None` only if `want > dim`.
fn orthonormal_columns(cols: &[DVector<f64>], dim: usize, want: usize) -> Option<Vec<DVector<f64>>> {
    if want > dim {
        return None;
    }
    let mut out: Vec<DVector<f64>> = Vec::with_capacity(want);
    let candidates = cols
        .iter()
        .cloned()
        .chain((0..dim).map(|k| DVector::from_fn(dim, |i, _| if i == k { 1.0 } else { 0.0 })));
    for v in candidates {
        if out.len() == want {
            break;
        }
        let scale = v.norm();
        if scale == 0.0 {
            continue;
        }
        let mut w = v;
        for _ in 0..2 {
            for q in &out {
                let c = q.dot(&w);
                w.axpy(-c, q, 1.0);
            }
        }
        let norm = w.norm();
        if norm > 1e-10 * scale {
            out.push(w / norm);
        }
    }
    Some(out)
}

/// Orthonormal basis of the column space of `m`, or the numerical rank if
/// the columns are dependent.
fn thin_orthonormal(m: &DMatrix<f64>) -> Result<DMatrix<f64>, usize> {
    let mut out: Vec<DVector<f64>> = Vec::with_capacity(m.ncols());
    let scale = m.norm().max(f64::MIN_POSITIVE);
    for v in m.column_iter() {
        let mut w = v.clone_owned();
        for _ in 0..2 {
            for q in &out {
                let c = q.dot(&w);
                w.axpy(-c, q, 1.0);
            }
        }
        let norm = w.norm();
        if norm <= 1e-10 * scale {
            continue;
        }
        out.push(w / norm);
    }
    if out.len() < m.ncols() {
        return Err(out.len());
    }
    Ok(DMatrix::from_columns(&out))
}

impl Mapper {
    pub fn ambient_dim(&self) -> usize {
        match self {
            Mapper::LinearPca { ambient_dim, .. } | Mapper::FileEmbedding { ambient_dim, .. } => *ambient_dim,
        }
    }

    pub fn low_dim(&self) -> usize {
        match self {
            Mapper::LinearPca { low_dim, .. } | Mapper::FileEmbedding { low_dim, .. } => *low_dim,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Mapper::LinearPca { .. } => "linear_pca",
            Mapper::FileEmbedding { .. } => "file_embedding",
        }
    }

    /// N × V basis of a linear mapper.
    pub fn basis_matrix(&self) -> Option<DMatrix<f64>> {
        match self {
            Mapper::LinearPca { ambient_dim, basis, .. } => {
                Some(DMatrix::from_fn(*ambient_dim, basis.len(), |i, j| basis[j][i]))
            }
            Mapper::FileEmbedding { .. } => None,
        }
    }

    pub fn transform(&self, x: &[f64]) -> Result<Vec<f64>, ManifoldError> {
        if x.len() != self.ambient_dim() {
            return Err(ManifoldError::DimensionMismatch {
                expected: self.ambient_dim(),
                found: x.len(),
            });
        }
        Ok(match self {
            Mapper::LinearPca { mean, basis, .. } => basis
                .iter()
                .map(|b| b.iter().zip(x).zip(mean).map(|((b, x), m)| b * (x - m)).sum())
                .collect(),
            Mapper::FileEmbedding {
                low_dim,
                train,
                coords,
                k_nn,
                ..
            } => {
                let mut near: Vec<(f64, usize)> = train.iter().map(|t| euclidean(t, x)).zip(0..).collect();
                near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                if near[0].0 == 0.0 {
                    return Ok(coords[near[0].1].clone());
                }
                near.truncate(*k_nn);
                let weights: Vec<f64> = near.iter().map(|(d, _)| 1.0 / (d + IDW_EPS)).collect();
                let total: f64 = weights.iter().sum();
                let mut out = vec![0.0; *low_dim];
                for ((_, idx), w) in near.iter().zip(&weights) {
                    for (o, c) in out.iter_mut().zip(&coords[*idx]) {
                        *o += w / total * c;
                    }
                }
                out
            }
        })
    }

    /// Inverse of `transform` for a linear mapper: mean + basis·v.
    pub fn inverse(&self, v: &[f64]) -> Option<Vec<f64>> {
        match self {
            Mapper::LinearPca { mean, basis, .. } => {
                let mut out = mean.clone();
                for (b, c) in basis.iter().zip(v) {
                    for (o, bi) in out.iter_mut().zip(b) {
                        *o += bi * c;
                    }
                }
                Some(out)
            }
            Mapper::FileEmbedding { .. } => None,
        }
    }
}

/// Default number of noise samples for the local fit.
pub fn default_k_t(ambient_dim: usize) -> usize {
    (4 * ambient_dim).max(50)
}

/// Affine approximation of the data manifold around a point.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalSubspace {
    pub base_point: Vec<f64>,
    /// N × V, orthonormal columns.
    pub basis: DMatrix<f64>,
    /// Mean over the noise samples of the part of the reconstruction error
    /// lying inside the fitted span; zero when the mapper is affine.
    pub fit_residual: f64,
    /// Sum over the noise samples of the full reconstruction error
    /// ‖z̃ − base − W(ω(z̃) − ω̄)‖ at the least-squares optimum.
    pub objective: f64,
    coefficients: DMatrix<f64>,
    low_mean: Vec<f64>,
}

impl LocalSubspace {
    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn low_dim(&self) -> usize {
        self.basis.ncols()
    }

    /// Least-squares reconstruction base + W(ω(z) − ω̄) (before
    /// orthonormalisation of W).
    pub fn reconstruct(&self, low: &[f64]) -> Vec<f64> {
        let delta = DVector::from_iterator(low.len(), low.iter().zip(&self.low_mean).map(|(a, b)| a - b));
        let r = &self.coefficients * delta;
        self.base_point.iter().zip(r.iter()).map(|(b, r)| b + r).collect()
    }

    pub fn project_vector(&self, v: &[f64]) -> Vec<f64> {
        project_vector(&self.basis, v)
    }
}

/// B Bᵀ v for an orthonormal basis B.
pub fn project_vector(basis: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    let v = DVector::from_column_slice(v);
    let coeff = basis.tr_mul(&v);
    (basis * coeff).as_slice().to_vec()
}

/// Fits the local subspace at `x` from `k_t` Gaussian samples of radius `r_t`.
///
/// With more samples than ambient dimensions the centred noise is rescaled so
/// that its sample covariance is exactly (r_t²/N) I; the least-squares
/// solution is then unbiased for an affine mapper, which recovers the
/// mapper's subspace exactly.
pub fn fit_local_subspace(
    mapper: &Mapper,
    x: &[f64],
    k_t: usize,
    r_t: f64,
    seed: Seed,
) -> Result<LocalSubspace, ManifoldError> {
    let (n, v) = (mapper.ambient_dim(), mapper.low_dim());
    if x.len() != n {
        return Err(ManifoldError::DimensionMismatch {
            expected: n,
            found: x.len(),
        });
    }
    if k_t <= v {
        return Err(ManifoldError::TooFewSamples { k_t, low_dim: v });
    }
    if !(r_t > 0.0) {
        return Err(ManifoldError::NonPositiveRadius(r_t));
    }

    let mut rng = seed.rng();
    let mut noise = DMatrix::<f64>::zeros(k_t, n);
    for i in 0..k_t {
        let g = gaussian_vector(&mut rng, n, r_t);
        noise.row_mut(i).copy_from_slice(&g);
    }
    let noise_mean = noise.row_mean();
    for mut row in noise.row_iter_mut() {
        row -= &noise_mean;
    }
    if k_t > n {
        let cov = noise.tr_mul(&noise) / k_t as f64;
        if let Some(chol) = cov.cholesky() {
            let sigma = r_t / (n as f64).sqrt();
            // noise ← noise · L^{-T} · σ
            let l = chol.l();
            let solved = l
                .solve_lower_triangular(&noise.transpose())
                .expect("Cholesky factor is invertible");
            noise = solved.transpose() * sigma;
        }
    }

    let mut samples = noise;
    for mut row in samples.row_iter_mut() {
        for (c, xi) in row.iter_mut().zip(x) {
            *c += xi;
        }
    }
    let mut low = DMatrix::<f64>::zeros(k_t, v);
    for i in 0..k_t {
        let z: Vec<f64> = samples.row(i).iter().copied().collect();
        low.row_mut(i).copy_from_slice(&mapper.transform(&z)?);
    }

    let base = samples.row_mean();
    let low_mean = low.row_mean();
    let mut zc = samples;
    for mut row in zc.row_iter_mut() {
        row -= &base;
    }
    let mut lc = low;
    for mut row in lc.row_iter_mut() {
        row -= &low_mean;
    }

    let svd = lc.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let tol = 1e-12 * smax.max(f64::MIN_POSITIVE) * k_t as f64;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    if rank < v {
        return Err(ManifoldError::RankDeficient { rank, needed: v });
    }
    // Wᵀ = argmin ‖Zc − Lc Wᵀ‖
    let wt = svd.solve(&zc, tol).expect("U and V^T were computed");
    let w = wt.transpose();
    let basis = thin_orthonormal(&w).map_err(|rank| ManifoldError::RankDeficient { rank, needed: v })?;

    let fitted = &lc * &wt;
    let mut residual_sum = 0.0;
    let mut objective = 0.0;
    for i in 0..k_t {
        let z = zc.row(i).transpose();
        let f = fitted.row(i).transpose();
        let in_span = &basis * basis.tr_mul(&z);
        residual_sum += (in_span - &f).norm();
        objective += (z - f).norm();
    }

    Ok(LocalSubspace {
        base_point: base.iter().copied().collect(),
        basis,
        fit_residual: residual_sum / k_t as f64,
        objective,
        coefficients: w,
        low_mean: low_mean.iter().copied().collect(),
    })
}

/// An affine subspace with orthonormal basis, used where the true data
/// subspace is known.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineSubspace {
    pub base_point: Vec<f64>,
    pub basis: DMatrix<f64>,
}

impl AffineSubspace {
    /// `directions` are spanning vectors (need not be orthonormal).
    pub fn new(base_point: Vec<f64>, directions: &[Vec<f64>]) -> Result<Self, ManifoldError> {
        let n = base_point.len();
        for d in directions {
            if d.len() != n {
                return Err(ManifoldError::DimensionMismatch {
                    expected: n,
                    found: d.len(),
                });
            }
        }
        let m = DMatrix::from_fn(n, directions.len(), |i, j| directions[j][i]);
        let basis = thin_orthonormal(&m).map_err(|rank| ManifoldError::RankDeficient {
            rank,
            needed: directions.len(),
        })?;
        Ok(Self { base_point, basis })
    }

    pub fn project_point(&self, p: &[f64]) -> Vec<f64> {
        let rel: Vec<f64> = p.iter().zip(&self.base_point).map(|(a, b)| a - b).collect();
        let proj = project_vector(&self.basis, &rel);
        self.base_point.iter().zip(proj).map(|(b, r)| b + r).collect()
    }

    pub fn orthogonal_component(&self, v: &[f64]) -> Vec<f64> {
        let proj = project_vector(&self.basis, v);
        v.iter().zip(proj).map(|(a, b)| a - b).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Lemma2Gap {
    /// max over draws of ‖Ĝ ω(x + r) − Proj(x + r)‖.
    pub lhs: f64,
    /// max over draws of F_B + ‖r^⊥‖.
    pub bound: f64,
    pub per_draw: Vec<(f64, f64)>,
}

impl Lemma2Gap {
    pub fn holds(&self) -> bool {
        self.per_draw.iter().all(|(l, b)| l <= b)
    }
}

/// Compares the fitted reconstruction of x + r with the projection of x + r
/// onto the true subspace, against the bound F_B + ‖r^⊥‖.
pub fn lemma2_gap(
    mapper: &Mapper,
    local: &LocalSubspace,
    truth: &AffineSubspace,
    x: &[f64],
    r_draws: &[Vec<f64>],
) -> Result<Lemma2Gap, ManifoldError> {
    let mut per_draw = Vec::with_capacity(r_draws.len());
    for r in r_draws {
        if r.len() != x.len() {
            return Err(ManifoldError::DimensionMismatch {
                expected: x.len(),
                found: r.len(),
            });
        }
        let moved: Vec<f64> = x.iter().zip(r).map(|(a, b)| a + b).collect();
        let recon = local.reconstruct(&mapper.transform(&moved)?);
        let proj = truth.project_point(&moved);
        let lhs = euclidean(&recon, &proj);
        let r_perp = truth.orthogonal_component(r);
        let bound = local.objective + r_perp.iter().map(|c| c * c).sum::<f64>().sqrt();
        per_draw.push((lhs, bound));
    }
    Ok(Lemma2Gap {
        lhs: per_draw.iter().map(|p| p.0).fold(0.0, f64::max),
        bound: per_draw.iter().map(|p| p.1).fold(0.0, f64::max),
        per_draw,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn plane_cloud(n: usize, seed: u64) -> PointCloud {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<[f64; 3]> = (0..n)
            .map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 0.0])
            .collect();
        PointCloud::from_rows(&rows).unwrap()
    }

    fn gram_error(b: &DMatrix<f64>) -> f64 {
        let g = b.tr_mul(b);
        (g - DMatrix::identity(b.ncols(), b.ncols())).amax()
    }

    #[test]
    fn pca_on_plane() {
        let c = plane_cloud(40, 1);
        let m = fit_mapper(&c, 2, &MapperKind::LinearPca).unwrap();
        let b = m.basis_matrix().unwrap();
        assert!(gram_error(&b) < 1e-10);
        assert!(b.row(2).amax() < 1e-12);
        for p in c.points() {
            let back = m.inverse(&m.transform(p).unwrap()).unwrap();
            assert!(euclidean(&back, p) < 1e-10);
        }
    }

    #[test]
    fn pca_rank_one_data() {
        let rows: Vec<[f64; 3]> = (0..10).map(|i| [i as f64, 2.0 * i as f64, 0.0]).collect();
        let c = PointCloud::from_rows(&rows).unwrap();
        let m = fit_mapper(&c, 2, &MapperKind::LinearPca).unwrap();
        assert!(gram_error(&m.basis_matrix().unwrap()) < 1e-10);
        for p in c.points() {
            let back = m.inverse(&m.transform(p).unwrap()).unwrap();
            assert!(euclidean(&back, p) < 1e-10);
        }
    }

    #[test]
    fn transform_identities() {
        let c = plane_cloud(30, 2);
        let m = fit_mapper(&c, 2, &MapperKind::LinearPca).unwrap();
        let Mapper::LinearPca { mean, .. } = &m else {
            unreachable!()
        };
        assert!(m.transform(mean).unwrap().iter().all(|v| v.abs() < 1e-15));
        let v = [0.3, -1.7];
        let t = m.transform(&m.inverse(&v).unwrap()).unwrap();
        assert!((t[0] - v[0]).abs() < 1e-12 && (t[1] - v[1]).abs() < 1e-12);
        assert!(matches!(
            m.transform(&[0.0; 2]),
            Err(ManifoldError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn file_embedding_lookup_and_midpoint() {
        let train = PointCloud::from_rows(&[[0.0, 0.0, 0.0], [2.0, 0.0, 0.0], [10.0, 10.0, 10.0]]).unwrap();
        let emb = PointCloud::from_rows(&[[1.0], [3.0], [-5.0]]).unwrap();
        let m = fit_mapper(
            &train,
            1,
            &MapperKind::FileEmbedding {
                embedding: emb,
                k_nn: 2,
            },
        )
        .unwrap();
        assert_eq!(m.transform(&[2.0, 0.0, 0.0]).unwrap(), vec![3.0]);
        assert_eq!(m.transform(&[1.0, 0.0, 0.0]).unwrap(), vec![2.0]);
        let json = serde_json::to_string(&m).unwrap();
        assert_eq!(serde_json::from_str::<Mapper>(&json).unwrap(), m);
    }

    #[test]
    fn mapper_errors() {
        let c = plane_cloud(5, 3);
        assert!(matches!(
            fit_mapper(&c, 3, &MapperKind::LinearPca),
            Err(ManifoldError::LowDim { .. })
        ));
        let tiny = plane_cloud(2, 3);
        assert!(matches!(
            fit_mapper(&tiny, 2, &MapperKind::LinearPca),
            Err(ManifoldError::TooFewPoints { .. })
        ));
        let emb = PointCloud::from_rows(&[[1.0], [3.0]]).unwrap();
        assert_eq!(
            fit_mapper(
                &c,
                1,
                &MapperKind::FileEmbedding {
                    embedding: emb,
                    k_nn: 1
                }
            ),
            Err(ManifoldError::EmbeddingRows { expected: 5, found: 2 })
        );
    }

    #[test]
    fn local_subspace_recovers_plane() {
        let c = plane_cloud(50, 4);
        let m = fit_mapper(&c, 2, &MapperKind::LinearPca).unwrap();
        let x = c.point(7).to_vec();
        let local = fit_local_subspace(&m, &x, 60, 0.05, Seed::new(9, 0)).unwrap();
        assert!(gram_error(&local.basis) < 1e-10);
        assert!(local.fit_residual < 1e-9);
        let p = &local.basis * local.basis.transpose();
        let mut truth = DMatrix::<f64>::zeros(3, 3);
        truth[(0, 0)] = 1.0;
        truth[(1, 1)] = 1.0;
        assert!((p - truth).norm() < 1e-8);
        assert!(euclidean(&local.base_point, &x) < 1e-12);
    }

    #[test]
    fn local_subspace_errors() {
        let c = plane_cloud(20, 5);
        let m = fit_mapper(&c, 2, &MapperKind::LinearPca).unwrap();
        assert_eq!(
            fit_local_subspace(&m, c.point(0), 2, 0.1, Seed::new(1, 0)),
            Err(ManifoldError::TooFewSamples { k_t: 2, low_dim: 2 })
        );
        assert!(fit_local_subspace(&m, c.point(0), 10, 0.0, Seed::new(1, 0)).is_err());
        // every sample maps to the same embedding row: rank 0
        let train = PointCloud::from_rows(&[[0.0, 0.0, 0.0], [5.0, 0.0, 0.0], [0.0, 5.0, 0.0]]).unwrap();
        let emb = PointCloud::from_rows(&[[1.0], [2.0], [3.0]]).unwrap();
        let flat = fit_mapper(
            &train,
            1,
            &MapperKind::FileEmbedding {
                embedding: emb,
                k_nn: 1,
            },
        )
        .unwrap();
        assert_eq!(
            fit_local_subspace(&flat, &[0.0, 0.0, 0.0], 10, 0.01, Seed::new(1, 0)),
            Err(ManifoldError::RankDeficient { rank: 0, needed: 1 })
        );
    }

    #[test]
    fn few_samples_skip_whitening() {
        let c = plane_cloud(20, 6);
        let m = fit_mapper(&c, 2, &MapperKind::LinearPca).unwrap();
        let local = fit_local_subspace(&m, c.point(0), 3, 0.1, Seed::new(2, 0)).unwrap();
        assert!(gram_error(&local.basis) < 1e-10);
        assert!(local.fit_residual.is_finite() && local.fit_residual >= 0.0);
    }

    #[test]
    fn lemma2_on_plane() {
        let c = plane_cloud(30, 7);
        let m = fit_mapper(&c, 2, &MapperKind::LinearPca).unwrap();
        let x = c.point(3).to_vec();
        let local = fit_local_subspace(&m, &x, 40, 0.1, Seed::new(3, 0)).unwrap();
        let truth = AffineSubspace::new(vec![0.0; 3], &[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]).unwrap();
        let in_plane = lemma2_gap(&m, &local, &truth, &x, &[vec![0.05, -0.02, 0.0]]).unwrap();
        assert!(in_plane.lhs < 1e-12);
        let ortho = lemma2_gap(&m, &local, &truth, &x, &[vec![0.0, 0.0, 0.1]]).unwrap();
        assert!(ortho.bound >= 0.1);
        assert!(ortho.holds());
    }
}
