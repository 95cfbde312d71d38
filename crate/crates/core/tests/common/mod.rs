//! Slow, obviously-correct reference implementations used as test oracles.
#![allow(dead_code)]

use emap_core::geometry::{euclidean, PointCloud, Seed};
use emap_core::tda::{PersistenceDiagram, PersistencePair};
use rand::Rng;

pub fn random_cloud(seed: Seed, n: usize, dim: usize) -> PointCloud {
    let mut rng = seed.rng();
    let coords: Vec<f64> = (0..n * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    PointCloud::new(dim, coords).unwrap()
}

fn dist(c: &PointCloud, i: usize, j: usize) -> f64 {
    euclidean(c.point(i), c.point(j))
}

type Bars = Vec<(f64, f64)>;

/// Rips persistence in dimensions 0 and 1 by the textbook column reduction
/// of the full boundary matrix of the 2-skeleton, restricted to simplices
/// with diameter at most `threshold`.
pub fn rips_oracle(c: &PointCloud, threshold: f64) -> (Bars, Bars) {
    let n = c.len();
    // (value, dim, vertices)
    let mut simplices: Vec<(f64, usize, Vec<usize>)> = (0..n).map(|i| (0.0, 0, vec![i])).collect();
    for i in 0..n {
        for j in i + 1..n {
            let d = dist(c, i, j);
            if d <= threshold {
                simplices.push((d, 1, vec![i, j]));
            }
        }
    }
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                let d = dist(c, i, j).max(dist(c, i, k)).max(dist(c, j, k));
                if d <= threshold {
                    simplices.push((d, 2, vec![i, j, k]));
                }
            }
        }
    }
    simplices.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let position = |v: &[usize]| simplices.iter().position(|s| s.2 == v).unwrap();
    let mut columns: Vec<Vec<usize>> = simplices
        .iter()
        .map(|(_, dim, v)| {
            let mut col: Vec<usize> = match dim {
                0 => vec![],
                1 => vec![position(&[v[0]]), position(&[v[1]])],
                _ => vec![
                    position(&[v[0], v[1]]),
                    position(&[v[0], v[2]]),
                    position(&[v[1], v[2]]),
                ],
            };
            col.sort_unstable();
            col
        })
        .collect();
    let m = columns.len();
    let mut low_owner: Vec<Option<usize>> = vec![None; m];
    for j in 0..m {
        while let Some(&low) = columns[j].last() {
            match low_owner[low] {
                Some(k) => {
                    let other = columns[k].clone();
                    columns[j] = symmetric_difference(&columns[j], &other);
                }
                None => {
                    low_owner[low] = Some(j);
                    break;
                }
            }
        }
    }
    let mut h0 = Vec::new();
    let mut h1 = Vec::new();
    let mut paired = vec![false; m];
    for (low, owner) in low_owner.iter().enumerate() {
        if let Some(j) = *owner {
            paired[low] = true;
            paired[j] = true;
            let (b, d) = (simplices[low].0, simplices[j].0);
            if d > b {
                match simplices[low].1 {
                    0 => h0.push((b, d)),
                    1 => h1.push((b, d)),
                    _ => {}
                }
            }
        }
    }
    for j in 0..m {
        if !paired[j] && columns[j].is_empty() {
            match simplices[j].1 {
                0 => h0.push((simplices[j].0, f64::INFINITY)),
                1 => h1.push((simplices[j].0, f64::INFINITY)),
                _ => {}
            }
        }
    }
    h0.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    h1.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    (h0, h1)
}

fn symmetric_difference(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut out: Vec<usize> = a.iter().filter(|x| !b.contains(x)).copied().collect();
    out.extend(b.iter().filter(|x| !a.contains(x)));
    out.sort_unstable();
    out
}

pub fn pairs(d: &PersistenceDiagram) -> Vec<(f64, f64)> {
    let mut v: Vec<(f64, f64)> = d.pairs.iter().map(|p| (p.birth, p.death)).collect();
    v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    v
}

pub fn diagram(dim: usize, pts: &[(f64, f64)]) -> PersistenceDiagram {
    PersistenceDiagram::new(dim, pts.iter().map(|&(b, d)| PersistencePair::new(b, d)).collect())
}

/// Sorted MST edge lengths by Kruskal with a naive component relabelling.
pub fn kruskal(c: &PointCloud) -> Vec<f64> {
    let n = c.len();
    let mut edges: Vec<(f64, usize, usize)> = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            edges.push((dist(c, i, j), i, j));
        }
    }
    edges.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut comp: Vec<usize> = (0..n).collect();
    let mut out = Vec::new();
    for (d, i, j) in edges {
        let (ci, cj) = (comp[i], comp[j]);
        if ci != cj {
            for x in comp.iter_mut() {
                if *x == cj {
                    *x = ci;
                }
            }
            out.push(d);
        }
    }
    out
}

fn linf(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).abs().max((a.1 - b.1).abs())
}

fn diag_cost(a: (f64, f64)) -> f64 {
    (a.1 - a.0) / 2.0
}

/// Whether a matching of cost at most `c` exists, by backtracking over
/// every assignment of the points of `a` to points of `b` or the diagonal.
fn matchable(a: &[(f64, f64)], b: &[(f64, f64)], used: &mut Vec<bool>, i: usize, c: f64) -> bool {
    if i == a.len() {
        return b.iter().zip(used.iter()).all(|(&p, &u)| u || diag_cost(p) <= c);
    }
    if diag_cost(a[i]) <= c && matchable(a, b, used, i + 1, c) {
        return true;
    }
    for j in 0..b.len() {
        if !used[j] && linf(a[i], b[j]) <= c {
            used[j] = true;
            if matchable(a, b, used, i + 1, c) {
                used[j] = false;
                return true;
            }
            used[j] = false;
        }
    }
    false
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// Bottleneck distance by exhaustive search over candidate values and
/// matchings. Essential bars are matched by trying every bijection.
pub fn bottleneck_oracle(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let (ea, fa): (Bars, Bars) = a.iter().partition(|p| p.1.is_infinite());
    let (eb, fb): (Bars, Bars) = b.iter().partition(|p| p.1.is_infinite());
    assert_eq!(ea.len(), eb.len());
    let essential = permutations(ea.len())
        .into_iter()
        .map(|p| {
            p.iter()
                .enumerate()
                .map(|(i, &j)| (ea[i].0 - eb[j].0).abs())
                .fold(0.0, f64::max)
        })
        .fold(f64::INFINITY, f64::min);
    let essential = if ea.is_empty() { 0.0 } else { essential };
    let mut candidates = vec![0.0];
    for &p in fa.iter().chain(&fb) {
        candidates.push(diag_cost(p));
    }
    for &p in &fa {
        for &q in &fb {
            candidates.push(linf(p, q));
        }
    }
    candidates.sort_by(f64::total_cmp);
    let finite = candidates
        .into_iter()
        .find(|&c| matchable(&fa, &fb, &mut vec![false; fb.len()], 0, c))
        .unwrap();
    finite.max(essential)
}

/// d_J by scanning all n! correspondences.
pub fn gh_oracle(x: &PointCloud, y: &PointCloud) -> f64 {
    let n = x.len();
    permutations(n)
        .into_iter()
        .map(|p| {
            let mut worst: f64 = 0.0;
            for i in 0..n {
                for j in 0..n {
                    worst = worst.max((dist(x, i, j) - dist(y, p[i], p[j])).abs());
                }
            }
            worst / 2.0
        })
        .fold(f64::INFINITY, f64::min)
}

/// Smallest self-distortion max|d(i,j) − d(π i, π j)|/2 over permutations,
/// skipping those at or below `tol`.
pub fn delta_oracle(x: &PointCloud, tol: f64) -> f64 {
    let n = x.len();
    permutations(n)
        .into_iter()
        .map(|p| {
            let mut worst: f64 = 0.0;
            for i in 0..n {
                for j in 0..n {
                    worst = worst.max((dist(x, i, j) - dist(x, p[i], p[j])).abs());
                }
            }
            worst / 2.0
        })
        .filter(|&d| d > tol)
        .fold(f64::INFINITY, f64::min)
}
