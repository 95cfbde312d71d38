//! Rips persistence.
//!
//! H0 comes from Kruskal's algorithm on the filtered edges. H1 is computed
//! by reducing the coboundary matrix δ¹ (rows: triangles, columns: edges) in
//! reverse filtration order, which yields the same pairs as reducing the
//! boundary matrix ∂² but never materialises the triangles:
//!
//! - edges that kill an H0 class are cleared up front (their columns would
//!   reduce to zero anyway);
//! - a column whose earliest cofacet is not yet claimed is an apparent pair
//!   and is paired without building a heap;
//! - other columns are reduced with a binary heap of cofacet keys, storing
//!   only the list of added columns and regenerating cofacets on demand.
//!
//! Within one dimension simplices are ordered by (diameter, combinatorial
//! index). Faces never come after their cofaces, so this is a valid
//! filtration order, and the resulting diagram does not depend on the tie
//! break.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};

use super::{FiltrationParams, PersistenceDiagram, PersistencePair, TdaError, UnionFind};
use crate::geometry::{pairwise_distances, DistanceMatrix, PointCloud};

/// Filtration key: IEEE bits of a non-negative diameter compare like the value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
struct Key {
    diam: u64,
    index: u64,
}

impl Key {
    fn new(diam: f64, index: u64) -> Self {
        Self {
            diam: diam.to_bits(),
            index,
        }
    }

    fn diameter(&self) -> f64 {
        f64::from_bits(self.diam)
    }
}

#[derive(Clone, Copy, Debug)]
struct Edge {
    i: usize,
    j: usize,
    diam: f64,
}

impl Edge {
    fn key(&self) -> Key {
        let (i, j) = (self.i as u64, self.j as u64);
        Key::new(self.diam, j * (j - 1) / 2 + i)
    }
}

fn triangle_index(a: usize, b: usize, c: usize) -> u64 {
    // a < b < c
    let (a, b, c) = (a as u64, b as u64, c as u64);
    c * (c - 1) * (c - 2) / 6 + b * (b - 1) / 2 + a
}

pub fn rips_persistence(cloud: &PointCloud, params: &FiltrationParams) -> Result<Vec<PersistenceDiagram>, TdaError> {
    rips_persistence_from_distances(&pairwise_distances(cloud), params)
}

/// Rips persistence of an explicit distance matrix. Returns diagrams for
/// dimensions `0..=params.max_dimension`.
pub fn rips_persistence_from_distances(
    dm: &DistanceMatrix,
    params: &FiltrationParams,
) -> Result<Vec<PersistenceDiagram>, TdaError> {
    let n = dm.len();
    let threshold = params.threshold(n)?;
    let count = simplex_count(dm, threshold, params.max_dimension);
    if count > params.simplex_budget {
        return Err(TdaError::BudgetExceeded {
            count,
            budget: params.simplex_budget,
        });
    }

    let mut edges = Vec::new();
    for j in 1..n {
        for i in 0..j {
            let d = dm.get(i, j);
            if d <= threshold {
                edges.push(Edge { i, j, diam: d });
            }
        }
    }
    edges.sort_unstable_by_key(Edge::key);

    let mut uf = UnionFind::new(n);
    let mut cleared = vec![false; edges.len()];
    let mut h0 = Vec::with_capacity(n);
    for (pos, e) in edges.iter().enumerate() {
        if uf.union(e.i, e.j) {
            cleared[pos] = true;
            if e.diam > 0.0 {
                h0.push(PersistencePair::new(0.0, e.diam));
            }
        }
    }
    let components = (0..n).filter(|&v| uf.find(v) == v).count();
    h0.extend(std::iter::repeat_n(
        PersistencePair::new(0.0, f64::INFINITY),
        components,
    ));

    let mut diagrams = vec![PersistenceDiagram::new(0, h0)];
    if params.max_dimension >= 1 {
        let h1 = CoboundaryReduction::new(dm, threshold, &edges).run(&cleared);
        diagrams.push(PersistenceDiagram::new(1, h1));
    }
    Ok(diagrams)
}

struct CoboundaryReduction<'a> {
    dm: &'a DistanceMatrix,
    threshold: f64,
    edges: &'a [Edge],
}

impl<'a> CoboundaryReduction<'a> {
    fn new(dm: &'a DistanceMatrix, threshold: f64, edges: &'a [Edge]) -> Self {
        Self { dm, threshold, edges }
    }

    fn for_each_cofacet(&self, e: Edge, mut f: impl FnMut(Key)) {
        let (ri, rj) = (self.dm.row(e.i), self.dm.row(e.j));
        for (k, (&dik, &djk)) in ri.iter().zip(rj).enumerate() {
            if k == e.i || k == e.j || dik > self.threshold || djk > self.threshold {
                continue;
            }
            let diam = e.diam.max(dik).max(djk);
            let index = if k < e.i {
                triangle_index(k, e.i, e.j)
            } else if k < e.j {
                triangle_index(e.i, k, e.j)
            } else {
                triangle_index(e.i, e.j, k)
            };
            f(Key::new(diam, index));
        }
    }

    fn earliest_cofacet(&self, e: Edge) -> Option<Key> {
        let mut best: Option<Key> = None;
        self.for_each_cofacet(e, |k| {
            if best.is_none_or(|b| k < b) {
                best = Some(k);
            }
        });
        best
    }

    fn run(&self, cleared: &[bool]) -> Vec<PersistencePair> {
        let mut pairs = Vec::new();
        // triangle index -> edge position owning it as pivot
        let mut owner: HashMap<u64, usize> = HashMap::new();
        // edge position -> columns added during its reduction (only when non-trivial)
        let mut reductions: HashMap<usize, Vec<usize>> = HashMap::new();
        let mut heap: BinaryHeap<Reverse<Key>> = BinaryHeap::new();

        for pos in (0..self.edges.len()).rev() {
            if cleared[pos] {
                continue;
            }
            let e = self.edges[pos];
            let pivot = match self.earliest_cofacet(e) {
                None => {
                    pairs.push(PersistencePair::new(e.diam, f64::INFINITY));
                    continue;
                }
                Some(p) => p,
            };
            if let std::collections::hash_map::Entry::Vacant(slot) = owner.entry(pivot.index) {
                slot.insert(pos);
                push_pair(&mut pairs, e.diam, pivot.diameter());
                continue;
            }

            heap.clear();
            self.for_each_cofacet(e, |k| heap.push(Reverse(k)));
            let mut column = vec![pos];
            loop {
                let Some(pivot) = pop_pivot(&mut heap) else {
                    pairs.push(PersistencePair::new(e.diam, f64::INFINITY));
                    break;
                };
                match owner.get(&pivot.index) {
                    Some(&other) => {
                        heap.push(Reverse(pivot));
                        let single = [other];
                        let added = reductions.get(&other).map_or(&single[..], Vec::as_slice);
                        for &c in added {
                            self.for_each_cofacet(self.edges[c], |k| heap.push(Reverse(k)));
                            column.push(c);
                        }
                    }
                    None => {
                        owner.insert(pivot.index, pos);
                        push_pair(&mut pairs, e.diam, pivot.diameter());
                        let column = cancel_pairs(column);
                        if column.len() > 1 {
                            reductions.insert(pos, column);
                        }
                        break;
                    }
                }
            }
        }
        pairs
    }
}

fn push_pair(pairs: &mut Vec<PersistencePair>, birth: f64, death: f64) {
    if death > birth {
        pairs.push(PersistencePair::new(birth, death));
    }
}

/// Pops the smallest key that survives mod-2 cancellation.
fn pop_pivot(heap: &mut BinaryHeap<Reverse<Key>>) -> Option<Key> {
    while let Some(Reverse(top)) = heap.pop() {
        if heap.peek().is_some_and(|Reverse(next)| *next == top) {
            heap.pop();
            continue;
        }
        return Some(top);
    }
    None
}

fn cancel_pairs(mut column: Vec<usize>) -> Vec<usize> {
    column.sort_unstable();
    let mut out = Vec::with_capacity(column.len());
    for c in column {
        if out.last() == Some(&c) {
            out.pop();
        } else {
            out.push(c);
        }
    }
    out
}

/// Number of simplices of dimension `<= max_dimension + 1` whose diameter is
/// at most `threshold`; this is what the H`max_dimension` computation touches.
pub fn simplex_count(dm: &DistanceMatrix, threshold: f64, max_dimension: usize) -> u64 {
    let n = dm.len();
    let words = n.div_ceil(64);
    let mut adj = vec![0u64; n * words];
    let mut edges = 0u64;
    for i in 0..n {
        for j in 0..n {
            if i != j && dm.get(i, j) <= threshold {
                adj[i * words + j / 64] |= 1 << (j % 64);
                if i < j {
                    edges += 1;
                }
            }
        }
    }
    let mut total = n as u64 + edges;
    if max_dimension >= 1 {
        let mut triangles = 0u64;
        for i in 0..n {
            let ri = &adj[i * words..(i + 1) * words];
            for j in i + 1..n {
                if ri[j / 64] & (1 << (j % 64)) == 0 {
                    continue;
                }
                let rj = &adj[j * words..(j + 1) * words];
                let start = j + 1;
                for w in start / 64..words {
                    let mut bits = ri[w] & rj[w];
                    if w == start / 64 {
                        bits &= u64::MAX.checked_shl((start % 64) as u32).unwrap_or(0);
                    }
                    triangles += u64::from(bits.count_ones());
                }
            }
        }
        total += triangles;
    }
    total
}
