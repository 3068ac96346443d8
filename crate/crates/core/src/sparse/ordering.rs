use std::collections::BTreeSet;

use super::SparsePrecision;

/// Minimum-degree fill-reducing ordering on the explicit elimination graph.
///
/// Returns `perm` with `perm[new] = old`. Ties go to the lowest original
/// index, so the result is deterministic.
pub fn minimum_degree(q: &SparsePrecision) -> Vec<usize> {
    let n = q.n();
    let mut adj: Vec<BTreeSet<usize>> = q
        .adjacency()
        .into_iter()
        .map(|a| a.into_iter().collect())
        .collect();
    let mut eliminated = vec![false; n];
    // degree buckets keyed by (degree, node)
    let mut queue: BTreeSet<(usize, usize)> = (0..n).map(|i| (adj[i].len(), i)).collect();
    let mut perm = Vec::with_capacity(n);

    while let Some((_, v)) = queue.pop_first() {
        eliminated[v] = true;
        perm.push(v);
        let nbrs: Vec<usize> = adj[v].iter().copied().collect();
        for &u in &nbrs {
            queue.remove(&(adj[u].len(), u));
            adj[u].remove(&v);
        }
        for (a, &u) in nbrs.iter().enumerate() {
            for &w in &nbrs[a + 1..] {
                adj[u].insert(w);
                adj[w].insert(u);
            }
        }
        for &u in &nbrs {
            debug_assert!(!eliminated[u]);
            queue.insert((adj[u].len(), u));
        }
        adj[v].clear();
    }
    perm
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arrow_matrix_defers_hub() {
        // node 0 couples to every other node
        let n = 6;
        let mut t: Vec<(usize, usize, f64)> = (0..n).map(|i| (i, i, 10.0)).collect();
        t.extend((1..n).map(|i| (i, 0, 1.0)));
        let q = SparsePrecision::from_triplets(n, &t).unwrap();
        let p = minimum_degree(&q);
        // once only one leaf remains the hub and the leaf tie on degree 1
        assert!(!p[..n - 2].contains(&0));
        let mut sorted = p.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..n).collect::<Vec<_>>());
    }
}
