use std::path::Path;

use crate::error::{Error, Result};

/// Undirected neighbourhood graph for the besag model, 0-based internally.
///
/// File format: the node count, then for every node `<id> <k> <j1> ... <jk>`
/// with 1-based ids, all whitespace-separated.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    neighbours: Vec<Vec<usize>>,
}

impl Graph {
    /// From 0-based adjacency lists. Not validated; see [`Graph::validate`].
    pub fn new(neighbours: Vec<Vec<usize>>) -> Self {
        Graph { neighbours }
    }

    /// Symmetric graph from undirected 0-based edges.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut nb = vec![Vec::new(); n];
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::GraphFormat(format!("edge ({a}, {b}) outside {n} nodes")));
            }
            if a == b {
                return Err(Error::SelfLoop(a + 1));
            }
            nb[a].push(b);
            nb[b].push(a);
        }
        for l in &mut nb {
            l.sort_unstable();
            l.dedup();
        }
        Ok(Graph { neighbours: nb })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut tokens = text.split_whitespace();
        let mut next = |what: &str| -> Result<usize> {
            let tok = tokens
                .next()
                .ok_or_else(|| Error::GraphFormat(format!("unexpected end of file reading {what}")))?;
            tok.parse::<usize>()
                .map_err(|_| Error::GraphFormat(format!("expected {what}, found `{tok}`")))
        };
        let n = next("node count")?;
        let mut nb: Vec<Option<Vec<usize>>> = vec![None; n];
        for _ in 0..n {
            let id = next("node id")?;
            if id == 0 || id > n {
                return Err(Error::GraphFormat(format!("node id {id} outside 1..={n}")));
            }
            let k = next("neighbour count")?;
            let mut list = Vec::with_capacity(k);
            for _ in 0..k {
                let j = next("neighbour id")?;
                if j == 0 || j > n {
                    return Err(Error::GraphFormat(format!("neighbour {j} of node {id} outside 1..={n}")));
                }
                list.push(j - 1);
            }
            list.sort_unstable();
            list.dedup();
            if nb[id - 1].replace(list).is_some() {
                return Err(Error::GraphFormat(format!("node {id} listed twice")));
            }
        }
        let g = Graph {
            neighbours: nb.into_iter().map(Option::unwrap_or_default).collect(),
        };
        g.validate()?;
        Ok(g)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn n(&self) -> usize {
        self.neighbours.len()
    }

    pub fn neighbours(&self) -> &[Vec<usize>] {
        &self.neighbours
    }

    /// Rejects self-loops and one-sided edges. Node ids in errors are 1-based.
    pub fn validate(&self) -> Result<()> {
        for (i, nbrs) in self.neighbours.iter().enumerate() {
            for &j in nbrs {
                if j == i {
                    return Err(Error::SelfLoop(i + 1));
                }
                if j >= self.n() || !self.neighbours[j].contains(&i) {
                    return Err(Error::AsymmetricGraph { from: i + 1, to: j + 1 });
                }
            }
        }
        Ok(())
    }

    /// Number of connected components.
    pub fn n_components(&self) -> usize {
        let n = self.n();
        let mut seen = vec![false; n];
        let mut count = 0;
        let mut stack = Vec::new();
        for s in 0..n {
            if seen[s] {
                continue;
            }
            count += 1;
            seen[s] = true;
            stack.push(s);
            while let Some(v) = stack.pop() {
                for &u in &self.neighbours[v] {
                    if !seen[u] {
                        seen[u] = true;
                        stack.push(u);
                    }
                }
            }
        }
        count
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_chain() {
        let g = Graph::parse("3\n1 1 2\n2 2 1 3\n3 1 2\n").unwrap();
        assert_eq!(g, Graph::from_edges(3, &[(0, 1), (1, 2)]).unwrap());
        assert_eq!(g.n_components(), 1);
    }

    #[test]
    fn parse_rejects_asymmetry_and_loops() {
        assert!(matches!(
            Graph::parse("2\n1 1 2\n2 0\n"),
            Err(Error::AsymmetricGraph { from: 1, to: 2 })
        ));
        assert!(matches!(Graph::parse("2\n1 1 1\n2 0\n"), Err(Error::SelfLoop(1))));
        assert!(matches!(Graph::parse("2\n1 1 2\n"), Err(Error::GraphFormat(_))));
        assert!(matches!(Graph::parse("2\n1 1 x\n2 0"), Err(Error::GraphFormat(_))));
    }

    #[test]
    fn components_of_two_edges() {
        let g = Graph::from_edges(4, &[(0, 1), (2, 3)]).unwrap();
        assert_eq!(g.n_components(), 2);
    }
}
