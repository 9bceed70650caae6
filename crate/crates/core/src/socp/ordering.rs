//! Minimum-degree fill-reducing ordering on an explicit elimination graph.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

/// Returns a permutation `perm` (new position → original index) for the
/// symmetric pattern given as adjacency lists (diagonal excluded). Ties are
/// broken by the smaller original index so the result is deterministic.
pub(crate) fn minimum_degree(adjacency: &[Vec<usize>]) -> Vec<usize> {
    let n = adjacency.len();
    let mut adj: Vec<Vec<usize>> = adjacency
        .iter()
        .enumerate()
        .map(|(i, nb)| {
            let mut v: Vec<usize> = nb.iter().copied().filter(|&j| j != i).collect();
            v.sort_unstable();
            v.dedup();
            v
        })
        .collect();
    let mut eliminated = vec![false; n];
    let mut heap: BinaryHeap<Reverse<(usize, usize)>> = (0..n).map(|i| Reverse((adj[i].len(), i))).collect();
    let mut perm = Vec::with_capacity(n);
    let mut mark = vec![usize::MAX; n];
    let mut merged = Vec::new();

    while let Some(Reverse((deg, v))) = heap.pop() {
        if eliminated[v] || deg != adj[v].len() {
            continue;
        }
        eliminated[v] = true;
        perm.push(v);
        let nbrs = std::mem::take(&mut adj[v]);
        for &u in &nbrs {
            mark[u] = v;
        }
        for &u in &nbrs {
            // adj[u] ← (adj[u] ∪ nbrs) \ {u, v}
            merged.clear();
            for &w in &adj[u] {
                if w != v && mark[w] != v {
                    merged.push(w);
                }
            }
            for &w in &nbrs {
                if w != u {
                    merged.push(w);
                }
            }
            merged.sort_unstable();
            adj[u].clear();
            adj[u].extend_from_slice(&merged);
            heap.push(Reverse((adj[u].len(), u)));
        }
    }
    perm
}

pub(crate) fn inverse_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (k, &p) in perm.iter().enumerate() {
        inv[p] = k;
    }
    inv
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arrow_matrix_eliminates_hub_last() {
        // Node 0 couples to everything; it can only go once one leaf is left.
        let n = 6;
        let mut adj = vec![Vec::new(); n];
        for i in 1..n {
            adj[0].push(i);
            adj[i].push(0);
        }
        let perm = minimum_degree(&adj);
        assert!(perm[n - 2..].contains(&0));
        let mut sorted = perm.clone();
        sorted.sort();
        assert_eq!(sorted, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn inverse_roundtrip() {
        let perm = vec![2, 0, 3, 1];
        let inv = inverse_permutation(&perm);
        for (k, &p) in perm.iter().enumerate() {
            assert_eq!(inv[p], k);
        }
    }
}
