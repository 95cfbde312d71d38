//! Discrete Gromov-Hausdorff distance between equal-size point clouds.
//!
//! For a permutation π the distortion is
//! D_π(X, Y) = ½ max_{i,j} |d(x_i, x_j) − d(y_π(i), y_π(j))|
//! and d_J(X, Y) is its minimum over all permutations. The exhaustive search
//! is capped at [`BRUTE_FORCE_MAX_POINTS`]. For a small per-point
//! perturbation of a generic cloud the identity is optimal, which gives the
//! O(n²) fast path.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{euclidean, pairwise_distances, DistanceMatrix, PointCloud};

pub const BRUTE_FORCE_MAX_POINTS: usize = 9;

/// Genericity tolerance relative to the cloud diameter.
pub const GENERIC_RELATIVE_TOL: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum GhError {
    #[error("clouds have {0} and {1} points")]
    SizeMismatch(usize, usize),
    #[error("clouds live in R^{0} and R^{1}")]
    DimensionMismatch(usize, usize),
    #[error("exhaustive search is limited to {cap} points, got {n}")]
    TooLarge { n: usize, cap: usize },
    #[error("at least {needed} points required, got {n}")]
    TooFewPoints { n: usize, needed: usize },
    #[error("cloud is not generic: all pairwise distances agree within {tol:e}")]
    NonGeneric { tol: f64 },
    #[error("radius {radius:e} is outside the small-radius regime (bound {bound:e})")]
    RadiusTooLarge { radius: f64, bound: f64 },
    #[error("not a permutation: {0:?}")]
    InvalidPermutation(Vec<usize>),
}

/// A bijection on point indices.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Correspondence(Vec<usize>);

impl Correspondence {
    pub fn new(permutation: Vec<usize>) -> Result<Self, GhError> {
        let n = permutation.len();
        let mut seen = vec![false; n];
        for &p in &permutation {
            if p >= n || seen[p] {
                return Err(GhError::InvalidPermutation(permutation));
            }
            seen[p] = true;
        }
        Ok(Self(permutation))
    }

    pub fn identity(n: usize) -> Self {
        Self((0..n).collect())
    }

    pub fn is_identity(&self) -> bool {
        self.0.iter().enumerate().all(|(i, &p)| i == p)
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<usize>> for Correspondence {
    type Error = GhError;

    fn try_from(v: Vec<usize>) -> Result<Self, GhError> {
        Self::new(v)
    }
}

impl From<Correspondence> for Vec<usize> {
    fn from(c: Correspondence) -> Self {
        c.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GhMode {
    BruteForce,
    IdentityFastPath,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GhResult {
    pub distance: f64,
    #[serde(rename = "permutation")]
    pub optimal_permutation: Correspondence,
    pub mode: GhMode,
}

/// D_π for explicit distance matrices.
pub fn distortion(dx: &DistanceMatrix, dy: &DistanceMatrix, perm: &[usize]) -> f64 {
    let n = dx.len();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i + 1..n {
            worst = worst.max((dx.get(i, j) - dy.get(perm[i], perm[j])).abs());
        }
    }
    worst / 2.0
}

fn check_pair(x: &PointCloud, y: &PointCloud) -> Result<(), GhError> {
    if x.len() != y.len() {
        return Err(GhError::SizeMismatch(x.len(), y.len()));
    }
    if x.dim() != y.dim() {
        return Err(GhError::DimensionMismatch(x.dim(), y.dim()));
    }
    Ok(())
}

pub fn discrete_gh(x: &PointCloud, y: &PointCloud, mode: GhMode) -> Result<GhResult, GhError> {
    check_pair(x, y)?;
    let (dx, dy) = (pairwise_distances(x), pairwise_distances(y));
    match mode {
        GhMode::IdentityFastPath => Ok(GhResult {
            distance: distortion(&dx, &dy, Correspondence::identity(x.len()).as_slice()),
            optimal_permutation: Correspondence::identity(x.len()),
            mode,
        }),
        GhMode::BruteForce => {
            let (distance, perm) = brute_force(&dx, &dy)?;
            Ok(GhResult {
                distance,
                optimal_permutation: perm,
                mode,
            })
        }
    }
}

/// Exact minimum over all permutations. Among optimal permutations the
/// lexicographically smallest is returned (so the identity wins ties).
fn brute_force(dx: &DistanceMatrix, dy: &DistanceMatrix) -> Result<(f64, Correspondence), GhError> {
    let n = dx.len();
    if n > BRUTE_FORCE_MAX_POINTS {
        return Err(GhError::TooLarge {
            n,
            cap: BRUTE_FORCE_MAX_POINTS,
        });
    }
    let identity = Correspondence::identity(n);
    let mut best = (2.0 * distortion(dx, dy, identity.as_slice()), identity.0.clone());
    let mut search = Search {
        dx,
        dy,
        perm: Vec::with_capacity(n),
        used: vec![false; n],
        bound: best.0,
    };
    search.descend(0.0, &mut |value, perm| {
        if value < best.0 {
            best = (value, perm.to_vec());
        }
        best.0
    });
    Ok((best.0 / 2.0, Correspondence(best.1)))
}

/// Depth-first enumeration of permutations in lexicographic order with
/// branch-and-bound on the running maximum of |d_x − d_y| (not halved).
struct Search<'a> {
    dx: &'a DistanceMatrix,
    dy: &'a DistanceMatrix,
    perm: Vec<usize>,
    used: Vec<bool>,
    bound: f64,
}

impl Search<'_> {
    /// `leaf` receives complete permutations and returns the new pruning
    /// bound: branches whose partial value is not below it are skipped.
    fn descend(&mut self, partial: f64, leaf: &mut dyn FnMut(f64, &[usize]) -> f64) {
        let i = self.perm.len();
        let n = self.dx.len();
        if i == n {
            self.bound = leaf(partial, &self.perm);
            return;
        }
        for v in 0..n {
            if self.used[v] {
                continue;
            }
            let mut value = partial;
            for (j, &pj) in self.perm.iter().enumerate() {
                value = value.max((self.dx.get(j, i) - self.dy.get(pj, v)).abs());
            }
            if value >= self.bound {
                continue;
            }
            self.used[v] = true;
            self.perm.push(v);
            self.descend(value, leaf);
            self.perm.pop();
            self.used[v] = false;
        }
    }
}

/// True iff some two pairwise distances differ by more than `tol`.
pub fn is_generic(cloud: &PointCloud, tol: f64) -> bool {
    let d = pairwise_distances(cloud);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..d.len() {
        for j in i + 1..d.len() {
            lo = lo.min(d.get(i, j));
            hi = hi.max(d.get(i, j));
        }
    }
    hi - lo > tol
}

pub fn default_generic_tol(cloud: &PointCloud) -> f64 {
    GENERIC_RELATIVE_TOL * pairwise_distances(cloud).diameter()
}

/// Result of scanning the self-distortions D_π(X, X).
#[derive(Clone, Debug, PartialEq)]
pub struct SelfDistortion {
    /// Smallest self-distortion above the tolerance.
    pub delta: f64,
    /// Permutations whose self-distortion is within the tolerance
    /// (the identity always among them, listed first).
    pub isometries: Vec<Correspondence>,
}

pub fn self_distortion_scan(cloud: &PointCloud) -> Result<SelfDistortion, GhError> {
    let n = cloud.len();
    if n < 2 {
        return Err(GhError::TooFewPoints { n, needed: 2 });
    }
    if n > BRUTE_FORCE_MAX_POINTS {
        return Err(GhError::TooLarge {
            n,
            cap: BRUTE_FORCE_MAX_POINTS,
        });
    }
    let tol = default_generic_tol(cloud);
    if !is_generic(cloud, tol) {
        return Err(GhError::NonGeneric { tol });
    }
    let d = pairwise_distances(cloud);
    let mut delta2 = f64::INFINITY;
    let mut isometries = Vec::new();
    let mut search = Search {
        dx: &d,
        dy: &d,
        perm: Vec::with_capacity(n),
        used: vec![false; n],
        bound: f64::INFINITY,
    };
    // values are doubled distortions; near-isometries must all be visited,
    // so the bound never drops below 2·tol
    search.descend(0.0, &mut |value, perm| {
        if value <= 2.0 * tol {
            isometries.push(Correspondence(perm.to_vec()));
        } else if value < delta2 {
            delta2 = value;
        }
        delta2.max(next_up(2.0 * tol))
    });
    if !delta2.is_finite() {
        return Err(GhError::NonGeneric { tol });
    }
    Ok(SelfDistortion {
        delta: delta2 / 2.0,
        isometries,
    })
}

fn next_up(x: f64) -> f64 {
    f64::from_bits(x.to_bits() + 1)
}

/// δ/4, where δ is the smallest non-trivial self-distortion of the cloud.
/// Every perturbation moving each point by less than this keeps the
/// identity correspondence optimal (up to exact self-isometries).
pub fn lemma1_radius_bound(cloud: &PointCloud) -> Result<f64, GhError> {
    Ok(self_distortion_scan(cloud)?.delta / 4.0)
}

/// Fast path guarded by the small-radius condition: errors unless every
/// point of `y` is within the bound of its counterpart in `x`. If `x` has
/// exact self-isometries the minimum over them is returned.
pub fn discrete_gh_checked(x: &PointCloud, y: &PointCloud) -> Result<GhResult, GhError> {
    check_pair(x, y)?;
    let scan = self_distortion_scan(x)?;
    let bound = scan.delta / 4.0;
    let radius = x
        .points()
        .zip(y.points())
        .map(|(a, b)| euclidean(a, b))
        .fold(0.0, f64::max);
    if radius >= bound {
        return Err(GhError::RadiusTooLarge { radius, bound });
    }
    let (dx, dy) = (pairwise_distances(x), pairwise_distances(y));
    let mut best: Option<(f64, &Correspondence)> = None;
    for perm in &scan.isometries {
        let d = distortion(&dx, &dy, perm.as_slice());
        if best.is_none_or(|(b, _)| d < b) {
            best = Some((d, perm));
        }
    }
    let (distance, perm) = best.expect("identity is always an isometry");
    Ok(GhResult {
        distance,
        optimal_permutation: perm.clone(),
        mode: GhMode::IdentityFastPath,
    })
}

/// Moves x_0 and x_1 apart along the line through them, each by `r`, and
/// leaves the other points fixed. The pair distance grows by 2r, so
/// d_J(X, Z) ≥ r while each point moves by r.
pub fn theorem1_witness(cloud: &PointCloud, r: f64) -> Result<PointCloud, GhError> {
    let bound = lemma1_radius_bound(cloud)?;
    if !(r > 0.0 && r < bound) {
        return Err(GhError::RadiusTooLarge { radius: r, bound });
    }
    let (x0, x1) = (cloud.point(0), cloud.point(1));
    let len = euclidean(x0, x1);
    let unit: Vec<f64> = x0.iter().zip(x1).map(|(a, b)| (b - a) / len).collect();
    let dx = pairwise_distances(cloud);

    // rounding can leave the computed distortion a few ulps below r;
    // lengthen the step by growing multiples of the coordinates' ulp
    let scale = x0.iter().chain(x1).fold(len, |m, v| m.max(v.abs()));
    let mut extra = 0.0;
    let mut step = r;
    for _ in 0..64 {
        let mut coords = cloud.coords().to_vec();
        let dim = cloud.dim();
        for (k, u) in unit.iter().enumerate() {
            coords[k] -= step * u;
            coords[dim + k] += step * u;
        }
        let z = cloud.with_coords(coords).expect("same shape as the input cloud");
        let dz = pairwise_distances(&z);
        if distortion(&dx, &dz, Correspondence::identity(cloud.len()).as_slice()) >= r {
            return Ok(z);
        }
        extra = if extra == 0.0 {
            f64::EPSILON * scale
        } else {
            extra * 2.0
        };
        step = r + extra;
    }
    unreachable!("witness distortion did not reach r")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(xs: &[f64]) -> PointCloud {
        let rows: Vec<[f64; 1]> = xs.iter().map(|&x| [x]).collect();
        PointCloud::from_rows(&rows).unwrap()
    }

    #[test]
    fn self_distance_is_zero() {
        let x = line(&[0.0, 1.0, 3.0, 7.0]);
        let g = discrete_gh(&x, &x, GhMode::BruteForce).unwrap();
        assert_eq!(g.distance, 0.0);
        assert!(g.optimal_permutation.is_identity());
    }

    #[test]
    fn small_line_example() {
        let g = discrete_gh(&line(&[0.0, 1.0, 3.0]), &line(&[0.0, 1.0, 4.0]), GhMode::BruteForce).unwrap();
        assert_eq!(g.distance, 0.5);
    }

    #[test]
    fn translation_is_free() {
        let x = PointCloud::from_rows(&[[0.0, 0.0], [1.0, 0.0], [0.0, 2.0]]).unwrap();
        let y = PointCloud::from_rows(&[[4.0, 4.0], [5.0, 4.0], [4.0, 6.0]]).unwrap();
        assert_eq!(discrete_gh(&x, &y, GhMode::BruteForce).unwrap().distance, 0.0);
    }

    #[test]
    fn relabelling_does_not_matter() {
        let x = line(&[0.0, 1.0, 3.0, 7.5, 8.0]);
        let y = line(&[0.2, 1.1, 2.9, 7.0, 8.3]);
        let y_shuffled = line(&[7.0, 0.2, 8.3, 2.9, 1.1]);
        let a = discrete_gh(&x, &y, GhMode::BruteForce).unwrap();
        let b = discrete_gh(&x, &y_shuffled, GhMode::BruteForce).unwrap();
        assert_eq!(a.distance, b.distance);
        assert_eq!(b.optimal_permutation.as_slice(), &[1, 4, 3, 0, 2]);
    }

    #[test]
    fn errors() {
        let x = line(&[0.0, 1.0]);
        assert_eq!(
            discrete_gh(&x, &line(&[0.0]), GhMode::BruteForce),
            Err(GhError::SizeMismatch(2, 1))
        );
        let big = line(&(0..10).map(|i| (i * i) as f64).collect::<Vec<_>>());
        assert_eq!(
            discrete_gh(&big, &big, GhMode::BruteForce),
            Err(GhError::TooLarge { n: 10, cap: 9 })
        );
        assert!(discrete_gh(&big, &big, GhMode::IdentityFastPath).is_ok());
        assert!(Correspondence::new(vec![0, 0]).is_err());
        assert!(Correspondence::new(vec![1, 2]).is_err());
    }

    #[test]
    fn genericity() {
        let s3 = 3f64.sqrt();
        let tri = PointCloud::from_rows(&[[0.0, 0.0], [1.0, 0.0], [0.5, s3 / 2.0]]).unwrap();
        assert!(!is_generic(&tri, default_generic_tol(&tri)));
        assert!(is_generic(&line(&[0.0, 1.0, 3.0]), 1e-9));
        let tet =
            PointCloud::from_rows(&[[1.0, 1.0, 1.0], [1.0, -1.0, -1.0], [-1.0, 1.0, -1.0], [-1.0, -1.0, 1.0]]).unwrap();
        assert!(!is_generic(&tet, default_generic_tol(&tet)));
        assert!(matches!(lemma1_radius_bound(&tri), Err(GhError::NonGeneric { .. })));
    }

    #[test]
    fn radius_bound_on_small_line() {
        // swapping the first two points (or reflecting) distorts by 1/2
        let x = line(&[0.0, 1.0, 3.0]);
        let scan = self_distortion_scan(&x).unwrap();
        assert_eq!(scan.isometries, vec![Correspondence::identity(3)]);
        assert_eq!(scan.delta, 0.5);
        assert_eq!(lemma1_radius_bound(&x).unwrap(), 0.125);
    }

    #[test]
    fn symmetric_cloud_reports_isometries() {
        // isosceles triangle: the reflection swapping the base vertices
        let x = PointCloud::from_rows(&[[-1.0, 0.0], [1.0, 0.0], [0.0, 3.0]]).unwrap();
        let scan = self_distortion_scan(&x).unwrap();
        assert_eq!(scan.isometries.len(), 2);
        assert!(scan.isometries[0].is_identity());
        assert_eq!(scan.isometries[1].as_slice(), &[1, 0, 2]);
    }

    #[test]
    fn checked_mode_rejects_large_moves() {
        let x = line(&[0.0, 1.0, 3.0]);
        let y = line(&[0.0, 1.2, 3.0]);
        assert!(matches!(
            discrete_gh_checked(&x, &y),
            Err(GhError::RadiusTooLarge { .. })
        ));
        let y = line(&[0.0, 1.1, 3.0]);
        let g = discrete_gh_checked(&x, &y).unwrap();
        assert_eq!(g.distance, discrete_gh(&x, &y, GhMode::BruteForce).unwrap().distance);
    }

    #[test]
    fn witness_on_two_points() {
        let x = PointCloud::from_rows(&[[0.0], [3.0], [4.5]]).unwrap();
        let z = theorem1_witness(&x, 0.1).unwrap();
        assert_eq!(z.point(0)[0], -0.1);
        assert!((z.point(1)[0] - 3.1).abs() < 1e-15);
        assert_eq!(z.point(2), x.point(2));
        assert!(discrete_gh(&x, &z, GhMode::BruteForce).unwrap().distance >= 0.1);
        assert!(theorem1_witness(&x, 1.0).is_err());
    }

    #[test]
    fn witness_on_square_corners() {
        let x = PointCloud::from_rows(&[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.2]]).unwrap();
        let z = theorem1_witness(&x, 0.01).unwrap();
        let d = discrete_gh(&x, &z, GhMode::IdentityFastPath).unwrap().distance;
        assert!((0.01..0.01 + 1e-15).contains(&d));
    }

    #[test]
    fn result_json_shape() {
        let g = GhResult {
            distance: 0.5,
            optimal_permutation: Correspondence::new(vec![1, 0]).unwrap(),
            mode: GhMode::IdentityFastPath,
        };
        let s = serde_json::to_string(&g).unwrap();
        assert_eq!(s, r#"{"distance":0.5,"permutation":[1,0],"mode":"identity_fast_path"}"#);
        assert_eq!(serde_json::from_str::<GhResult>(&s).unwrap(), g);
        assert!(
            serde_json::from_str::<GhResult>(r#"{"distance":0.5,"permutation":[1,1],"mode":"brute_force"}"#).is_err()
        );
    }
}
