//! Mesh connectivity graphs and bandwidth-reducing node orderings.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Symmetric node adjacency without self loops, stored as sorted neighbour
/// lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdjacencyMatrix {
    neighbors: Vec<Vec<usize>>,
}

impl AdjacencyMatrix {
    /// Graph with `n` nodes and no edges.
    pub fn empty(n: usize) -> Self {
        Self {
            neighbors: vec![Vec::new(); n],
        }
    }

    /// Build from an explicit edge list. Self loops are dropped, duplicates
    /// merged.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut adj = Self::empty(n);
        for (k, &(i, j)) in edges.iter().enumerate() {
            for idx in [i, j] {
                if idx >= n {
                    return Err(Error::NodeOutOfRange {
                        element: k,
                        index: idx,
                        n,
                    });
                }
            }
            if i != j {
                adj.neighbors[i].push(j);
                adj.neighbors[j].push(i);
            }
        }
        adj.normalize();
        Ok(adj)
    }

    fn normalize(&mut self) {
        for list in &mut self.neighbors {
            list.sort_unstable();
            list.dedup();
        }
    }

    pub fn n(&self) -> usize {
        self.neighbors.len()
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.neighbors[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.neighbors[node].len()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.neighbors[i].binary_search(&j).is_ok()
    }

    /// Unordered edges `(i, j)` with `i < j`, in ascending order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (i, list) in self.neighbors.iter().enumerate() {
            out.extend(list.iter().filter(|&&j| j > i).map(|&j| (i, j)));
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }
}

/// Reordering of nodes: `perm[new_position] = original_node`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodePermutation {
    perm: Vec<usize>,
}

impl NodePermutation {
    pub fn identity(n: usize) -> Self {
        Self { perm: (0..n).collect() }
    }

    pub fn new(perm: Vec<usize>) -> Result<Self> {
        let n = perm.len();
        let mut seen = vec![false; n];
        for &p in &perm {
            if p >= n || seen[p] {
                return Err(Error::invalid(format!(
                    "permutation entry {p} is out of range or repeated"
                )));
            }
            seen[p] = true;
        }
        Ok(Self { perm })
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.perm
    }

    /// `positions()[node]` is the new position of `node`.
    pub fn positions(&self) -> Vec<usize> {
        let mut pos = vec![0; self.perm.len()];
        for (new, &old) in self.perm.iter().enumerate() {
            pos[old] = new;
        }
        pos
    }

    pub fn reversed(&self) -> Self {
        let mut perm = self.perm.clone();
        perm.reverse();
        Self { perm }
    }

    /// Reorder a per-node field into the permuted layout.
    pub fn apply<T: Clone>(&self, values: &[T]) -> Result<Vec<T>> {
        if values.len() != self.perm.len() {
            return Err(Error::dims("permutation apply", self.perm.len(), values.len()));
        }
        Ok(self.perm.iter().map(|&i| values[i].clone()).collect())
    }
}

/// Adjacency of nodes that co-occur in at least one element.
pub fn build_adjacency(n: usize, connectivity: &[Vec<usize>]) -> Result<AdjacencyMatrix> {
    let mut adj = AdjacencyMatrix::empty(n);
    for (e, element) in connectivity.iter().enumerate() {
        if element.len() < 2 {
            return Err(Error::invalid(format!(
                "element {e} has {} node(s); at least 2 are required",
                element.len()
            )));
        }
        if let Some(&bad) = element.iter().find(|&&i| i >= n) {
            return Err(Error::NodeOutOfRange {
                element: e,
                index: bad,
                n,
            });
        }
        for (a, &i) in element.iter().enumerate() {
            for &j in &element[a + 1..] {
                if i != j {
                    adj.neighbors[i].push(j);
                    adj.neighbors[j].push(i);
                }
            }
        }
    }
    adj.normalize();
    Ok(adj)
}

/// Maximum index distance spanned by an edge under `perm`; zero without edges.
pub fn bandwidth(adj: &AdjacencyMatrix, perm: &NodePermutation) -> Result<usize> {
    if perm.len() != adj.n() {
        return Err(Error::dims("bandwidth permutation", adj.n(), perm.len()));
    }
    let pos = perm.positions();
    Ok(adj
        .edges()
        .into_iter()
        .map(|(i, j)| pos[i].abs_diff(pos[j]))
        .max()
        .unwrap_or(0))
}

/// Reverse Cuthill–McKee ordering.
///
/// Each component starts from its lowest-degree node (smallest index on
/// ties) and components are visited in that same order. Neighbours are
/// queued by ascending degree. If the result would be wider than the input
/// ordering, the identity is returned instead.
pub fn reverse_cuthill_mckee(adj: &AdjacencyMatrix) -> NodePermutation {
    let n = adj.n();
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&i| (adj.degree(i), i));

    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut queue = VecDeque::new();
    let mut scratch = Vec::new();

    for &start in &by_degree {
        if visited[start] {
            continue;
        }
        let component_begin = order.len();
        visited[start] = true;
        queue.push_back(start);
        while let Some(node) = queue.pop_front() {
            order.push(node);
            scratch.clear();
            scratch.extend(adj.neighbors(node).iter().copied().filter(|&j| !visited[j]));
            scratch.sort_by_key(|&j| (adj.degree(j), j));
            for &j in &scratch {
                visited[j] = true;
                queue.push_back(j);
            }
        }
        order[component_begin..].reverse();
    }

    let rcm = NodePermutation { perm: order };
    let identity = NodePermutation::identity(n);
    let width = |p: &NodePermutation| bandwidth(adj, p).unwrap_or(usize::MAX);
    if width(&rcm) <= width(&identity) {
        rcm
    } else {
        identity
    }
}

/// Parse a connectivity file: one element per line, zero-based node
/// indices separated by whitespace. Blank lines and `#` comments are
/// skipped.
pub fn parse_connectivity(text: &str) -> Result<Vec<Vec<usize>>> {
    let mut elements = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let element = line
            .split_whitespace()
            .map(|t| {
                t.parse::<usize>().map_err(|_| Error::Parse {
                    path: "<connectivity>".into(),
                    msg: format!("line {}: bad node index `{t}`", lineno + 1),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        elements.push(element);
    }
    Ok(elements)
}

pub fn read_connectivity(path: impl AsRef<Path>) -> Result<Vec<Vec<usize>>> {
    parse_connectivity(&fs::read_to_string(path)?)
}

pub fn write_permutation(path: impl AsRef<Path>, perm: &NodePermutation) -> Result<()> {
    let mut out = String::with_capacity(perm.len() * 6);
    for p in perm.as_slice() {
        let _ = writeln!(out, "{p}");
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_permutation(path: impl AsRef<Path>) -> Result<NodePermutation> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let perm = text
        .split_whitespace()
        .map(|t| {
            t.parse::<usize>().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                msg: format!("bad index `{t}`"),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    NodePermutation::new(perm)
}
