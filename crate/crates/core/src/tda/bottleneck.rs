//! Bottleneck distance between persistence diagrams.
//!
//! Essential bars are matched to each other by sorted birth. For the finite
//! parts the optimal bottleneck value is one of finitely many candidate
//! costs; we binary search over them and test each threshold with a perfect
//! matching on the usual doubled graph (every point may also go to its own
//! diagonal projection, and diagonal copies match each other for free).

use super::{hopcroft_karp, PersistenceDiagram, PersistencePair, TdaError};

fn linf(a: &PersistencePair, b: &PersistencePair) -> f64 {
    (a.birth - b.birth).abs().max((a.death - b.death).abs())
}

fn to_diagonal(p: &PersistencePair) -> f64 {
    (p.death - p.birth) / 2.0
}

pub fn bottleneck_distance(d1: &PersistenceDiagram, d2: &PersistenceDiagram) -> Result<f64, TdaError> {
    if d1.dimension != d2.dimension {
        return Err(TdaError::DimensionMismatch(d1.dimension, d2.dimension));
    }
    let essential = |d: &PersistenceDiagram| {
        let mut b: Vec<f64> = d.pairs.iter().filter(|p| p.is_essential()).map(|p| p.birth).collect();
        b.sort_by(f64::total_cmp);
        b
    };
    let (e1, e2) = (essential(d1), essential(d2));
    if e1.len() != e2.len() {
        return Err(TdaError::EssentialMismatch(e1.len(), e2.len()));
    }
    let essential_cost = e1.iter().zip(&e2).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);

    let a: Vec<PersistencePair> = d1.finite().copied().collect();
    let b: Vec<PersistencePair> = d2.finite().copied().collect();
    Ok(essential_cost.max(finite_bottleneck(&a, &b)))
}

fn finite_bottleneck(a: &[PersistencePair], b: &[PersistencePair]) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 0.0;
    }
    let mut candidates: Vec<f64> = Vec::with_capacity(a.len() * b.len() + a.len() + b.len() + 1);
    candidates.push(0.0);
    candidates.extend(a.iter().chain(b).map(to_diagonal));
    for p in a {
        candidates.extend(b.iter().map(|q| linf(p, q)));
    }
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();

    // the largest candidate is always feasible (everything to the diagonal
    // costs at most the largest half-persistence)
    let (mut lo, mut hi) = (0, candidates.len() - 1);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if feasible(a, b, candidates[mid]) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    candidates[lo]
}

/// Left: points of `a`, then diagonal copies of `b`. Right: points of `b`,
/// then diagonal copies of `a`.
fn feasible(a: &[PersistencePair], b: &[PersistencePair], eps: f64) -> bool {
    let (m, k) = (a.len(), b.len());
    let mut adj: Vec<Vec<usize>> = Vec::with_capacity(m + k);
    for (i, p) in a.iter().enumerate() {
        let mut row: Vec<usize> = (0..k).filter(|&j| linf(p, &b[j]) <= eps).collect();
        if to_diagonal(p) <= eps {
            row.push(k + i);
        }
        adj.push(row);
    }
    for (j, q) in b.iter().enumerate() {
        let mut row = Vec::with_capacity(m + 1);
        if to_diagonal(q) <= eps {
            row.push(j);
        }
        row.extend(k..k + m);
        adj.push(row);
    }
    hopcroft_karp(&adj, k + m).size == m + k
}

/// Bottleneck distance divided by the perturbation noise level.
pub fn normalized_bottleneck(d1: &PersistenceDiagram, d2: &PersistenceDiagram, noise: f64) -> Result<f64, TdaError> {
    if !(noise > 0.0) {
        return Err(TdaError::NonPositiveNoise(noise));
    }
    Ok(bottleneck_distance(d1, d2)? / noise)
}
