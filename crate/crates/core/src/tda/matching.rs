//! Maximum cardinality bipartite matching (Hopcroft-Karp).

use std::collections::VecDeque;

const FREE: usize = usize::MAX;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Matching {
    pub size: usize,
    /// Right vertex matched to each left vertex.
    pub left: Vec<Option<usize>>,
}

/// `adj[u]` lists the right neighbours of left vertex `u`; right vertices are
/// `0..n_right`.
pub fn hopcroft_karp(adj: &[Vec<usize>], n_right: usize) -> Matching {
    let n_left = adj.len();
    let mut match_l = vec![FREE; n_left];
    let mut match_r = vec![FREE; n_right];
    let mut dist = vec![0usize; n_left];
    let mut size = 0;

    loop {
        // BFS layering from free left vertices
        let mut queue = VecDeque::new();
        for u in 0..n_left {
            if match_l[u] == FREE {
                dist[u] = 0;
                queue.push_back(u);
            } else {
                dist[u] = usize::MAX;
            }
        }
        let mut found = false;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                let w = match_r[v];
                if w == FREE {
                    found = true;
                } else if dist[w] == usize::MAX {
                    dist[w] = dist[u] + 1;
                    queue.push_back(w);
                }
            }
        }
        if !found {
            break;
        }
        let mut cursor = vec![0usize; n_left];
        for u in 0..n_left {
            if match_l[u] == FREE && augment(u, adj, &mut match_l, &mut match_r, &mut dist, &mut cursor) {
                size += 1;
            }
        }
    }

    Matching {
        size,
        left: match_l.into_iter().map(|v| (v != FREE).then_some(v)).collect(),
    }
}

/// Iterative DFS along the BFS layers.
fn augment(
    root: usize,
    adj: &[Vec<usize>],
    match_l: &mut [usize],
    match_r: &mut [usize],
    dist: &mut [usize],
    cursor: &mut [usize],
) -> bool {
    let mut stack = vec![root];
    while let Some(&u) = stack.last() {
        if cursor[u] == adj[u].len() {
            dist[u] = usize::MAX;
            stack.pop();
            continue;
        }
        let v = adj[u][cursor[u]];
        let w = match_r[v];
        if w == FREE {
            // flip the path root -> ... -> u -> v
            let mut v = v;
            while let Some(u) = stack.pop() {
                let prev = match_l[u];
                match_l[u] = v;
                match_r[v] = u;
                v = prev;
            }
            return true;
        }
        if dist[w] == dist[u].wrapping_add(1) {
            stack.push(w);
        } else {
            cursor[u] += 1;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_max(adj: &[Vec<usize>], n_right: usize) -> usize {
        fn go(u: usize, adj: &[Vec<usize>], used: &mut Vec<bool>) -> usize {
            if u == adj.len() {
                return 0;
            }
            let mut best = go(u + 1, adj, used);
            for &v in &adj[u] {
                if !used[v] {
                    used[v] = true;
                    best = best.max(1 + go(u + 1, adj, used));
                    used[v] = false;
                }
            }
            best
        }
        go(0, adj, &mut vec![false; n_right])
    }

    #[test]
    fn perfect_on_small_graph() {
        let adj = vec![vec![0, 1], vec![0], vec![1, 2]];
        let m = hopcroft_karp(&adj, 3);
        assert_eq!(m.size, 3);
        assert_eq!(m.left, vec![Some(1), Some(0), Some(2)]);
    }

    #[test]
    fn agrees_with_exhaustive_search() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..300 {
            let nl = rng.random_range(0..7);
            let nr = rng.random_range(1..7);
            let adj: Vec<Vec<usize>> = (0..nl)
                .map(|_| (0..nr).filter(|_| rng.random_bool(0.35)).collect())
                .collect();
            let m = hopcroft_karp(&adj, nr);
            assert_eq!(m.size, brute_max(&adj, nr));
            let mut seen = vec![false; nr];
            for (u, v) in m.left.iter().enumerate() {
                if let Some(v) = *v {
                    assert!(adj[u].contains(&v));
                    assert!(!seen[v]);
                    seen[v] = true;
                }
            }
        }
    }
}
