//! Random graphs, their acyclic orientation and layer indexing, and the
//! recurrent architectures built from them.

mod arch;
mod experiment;
mod generate;

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use arch::{build_model, ArchGraph, GraphFamily, GraphSpec, RandStructModel};
pub use experiment::{run_one, run_planned, run_random_experiments, ExperimentRecord, RandStructConfig};
pub use generate::{ba_generate, ba_seed_nodes, ws_generate};

/// Simple undirected graph on nodes `0..n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UGraph {
    n: usize,
    adj: Vec<BTreeSet<usize>>,
}

impl UGraph {
    pub fn empty(n: usize) -> Self {
        UGraph {
            n,
            adj: vec![BTreeSet::new(); n],
        }
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut g = UGraph::empty(n);
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::input(format!("edge ({u},{v}) outside {n} nodes")));
            }
            if u == v {
                return Err(Error::input(format!("self-loop at node {u}")));
            }
            if !g.add_edge(u, v) {
                return Err(Error::input(format!("duplicate edge ({u},{v})")));
            }
        }
        Ok(g)
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(BTreeSet::len).sum::<usize>() / 2
    }

    /// Edges as `(u, v)` with `u < v`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.edge_count());
        for (u, nb) in self.adj.iter().enumerate() {
            out.extend(nb.range(u + 1..).map(|&v| (u, v)));
        }
        out
    }

    pub fn neighbors(&self, u: usize) -> &BTreeSet<usize> {
        &self.adj[u]
    }

    pub fn degree(&self, u: usize) -> usize {
        self.adj[u].len()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adj[u].contains(&v)
    }

    /// Returns false if the edge was already present.
    pub(crate) fn add_edge(&mut self, u: usize, v: usize) -> bool {
        debug_assert!(u != v);
        let fresh = self.adj[u].insert(v);
        self.adj[v].insert(u);
        fresh
    }

    pub(crate) fn remove_edge(&mut self, u: usize, v: usize) {
        self.adj[u].remove(&v);
        self.adj[v].remove(&u);
    }

    /// Hop distances from `src`; `None` for unreachable nodes.
    pub fn bfs(&self, src: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.n];
        dist[src] = Some(0);
        let mut queue = VecDeque::from([src]);
        while let Some(u) = queue.pop_front() {
            let d = dist[u].expect("queued nodes are reached");
            for &v in &self.adj[u] {
                if dist[v].is_none() {
                    dist[v] = Some(d + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    pub fn is_connected(&self) -> bool {
        self.n == 0 || self.bfs(0).iter().all(Option::is_some)
    }

    /// `n` on the first line, then one `u v` line per edge.
    pub fn to_text(&self) -> String {
        let mut s = format!("{}\n", self.n);
        for (u, v) in self.edges() {
            let _ = writeln!(s, "{u} {v}");
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let (n, pairs, trailer) = parse_edge_list(text)?;
        if !trailer.is_empty() {
            return Err(Error::Parse("layer-index lines in an undirected graph file".into()));
        }
        UGraph::from_edges(n, &pairs)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Ok(std::fs::write(path, self.to_text())?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        UGraph::parse(&std::fs::read_to_string(path)?)
    }
}

/// Directed graph on `0..n`; acyclic when produced by [`to_dag`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dag {
    n: usize,
    arcs: Vec<(usize, usize)>,
}

impl Dag {
    /// Arcs are sorted and deduplicated. Cycles are not rejected here;
    /// [`layer_index`] detects them.
    pub fn new(n: usize, arcs: &[(usize, usize)]) -> Result<Self> {
        for &(u, v) in arcs {
            if u >= n || v >= n {
                return Err(Error::input(format!("arc ({u},{v}) outside {n} nodes")));
            }
            if u == v {
                return Err(Error::input(format!("self-loop at node {u}")));
            }
        }
        let mut arcs = arcs.to_vec();
        arcs.sort_unstable();
        arcs.dedup();
        Ok(Dag { n, arcs })
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn arcs(&self) -> &[(usize, usize)] {
        &self.arcs
    }

    pub fn parents(&self) -> Vec<Vec<usize>> {
        let mut p = vec![Vec::new(); self.n];
        for &(u, v) in &self.arcs {
            p[v].push(u);
        }
        p
    }

    pub fn in_degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.n];
        for &(_, v) in &self.arcs {
            d[v] += 1;
        }
        d
    }

    pub fn out_degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.n];
        for &(u, _) in &self.arcs {
            d[u] += 1;
        }
        d
    }

    pub fn sources(&self) -> Vec<usize> {
        let d = self.in_degrees();
        (0..self.n).filter(|&v| d[v] == 0).collect()
    }

    pub fn sinks(&self) -> Vec<usize> {
        let d = self.out_degrees();
        (0..self.n).filter(|&v| d[v] == 0).collect()
    }

    /// Edge-list text, followed by `L v idx` lines when indices are given.
    pub fn to_text(&self, layer_index: Option<&[usize]>) -> String {
        let mut s = format!("{}\n", self.n);
        for &(u, v) in &self.arcs {
            let _ = writeln!(s, "{u} {v}");
        }
        if let Some(idx) = layer_index {
            for (v, l) in idx.iter().enumerate() {
                let _ = writeln!(s, "L {v} {l}");
            }
        }
        s
    }

    /// Parses a `.dag` file; the layer indices are returned when present.
    pub fn parse(text: &str) -> Result<(Self, Option<Vec<usize>>)> {
        let (n, pairs, trailer) = parse_edge_list(text)?;
        let dag = Dag::new(n, &pairs)?;
        if trailer.is_empty() {
            return Ok((dag, None));
        }
        let mut idx = vec![None; n];
        for (v, l) in trailer {
            if v >= n || idx[v].replace(l).is_some() {
                return Err(Error::Parse(format!("bad layer-index line for node {v}")));
            }
        }
        let idx: Option<Vec<usize>> = idx.into_iter().collect();
        let idx = idx.ok_or_else(|| Error::Parse("layer indices do not cover every node".into()))?;
        Ok((dag, Some(idx)))
    }

    pub fn save(&self, path: &Path, layer_index: Option<&[usize]>) -> Result<()> {
        Ok(std::fs::write(path, self.to_text(layer_index))?)
    }

    pub fn load(path: &Path) -> Result<(Self, Option<Vec<usize>>)> {
        Dag::parse(&std::fs::read_to_string(path)?)
    }
}

type EdgeList = (usize, Vec<(usize, usize)>, Vec<(usize, usize)>);

fn parse_edge_list(text: &str) -> Result<EdgeList> {
    let mut lines = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'));
    let header = lines.next().ok_or_else(|| Error::Parse("empty graph file".into()))?;
    let n: usize = header
        .parse()
        .map_err(|_| Error::Parse(format!("bad node count {header:?}")))?;
    let num = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::Parse(format!("bad integer {s:?}")))
    };
    let mut pairs = Vec::new();
    let mut trailer = Vec::new();
    for line in lines {
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields.as_slice() {
            ["L", v, l] => trailer.push((num(v)?, num(l)?)),
            [u, v] if trailer.is_empty() => pairs.push((num(u)?, num(v)?)),
            _ => return Err(Error::Parse(format!("bad graph line {line:?}"))),
        }
    }
    Ok((n, pairs, trailer))
}

/// Orients every edge from the lower to the higher label.
pub fn to_dag(g: &UGraph) -> Dag {
    Dag {
        n: g.node_count(),
        arcs: g.edges(),
    }
}

/// Layer index of every node: 0 for nodes without parents, otherwise one
/// more than the largest parent index. Computed in topological order.
pub fn layer_index(dag: &Dag) -> Result<Vec<usize>> {
    let mut children = vec![Vec::new(); dag.n];
    for &(u, v) in &dag.arcs {
        children[u].push(v);
    }
    let mut pending = dag.in_degrees();
    let mut index = vec![0usize; dag.n];
    let mut queue: VecDeque<usize> = (0..dag.n).filter(|&v| pending[v] == 0).collect();
    let mut seen = 0;
    while let Some(u) = queue.pop_front() {
        seen += 1;
        for &v in &children[u] {
            index[v] = index[v].max(index[u] + 1);
            pending[v] -= 1;
            if pending[v] == 0 {
                queue.push_back(v);
            }
        }
    }
    if seen != dag.n {
        return Err(Error::contract("graph has a cycle; layer indices are undefined"));
    }
    Ok(index)
}
