//! Structural properties of generated graphs.
//!
//! Distance and centrality measures are taken on the undirected base graph,
//! which is connected by construction; layer, source and sink counts come
//! from the DAG.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{ArchGraph, Dag, UGraph};
use crate::numerics::stats;

/// All-pairs hop distances; a domain error if any pair is unreachable.
pub fn distances(g: &UGraph) -> Result<Vec<Vec<usize>>> {
    (0..g.node_count())
        .map(|s| {
            g.bfs(s)
                .into_iter()
                .collect::<Option<Vec<usize>>>()
                .ok_or_else(|| Error::domain("graph is disconnected"))
        })
        .collect()
}

fn require_nodes(g: &UGraph, min: usize, what: &str) -> Result<()> {
    if g.node_count() < min {
        return Err(Error::domain(format!("{what} needs at least {min} nodes")));
    }
    Ok(())
}

pub fn eccentricities(g: &UGraph) -> Result<Vec<usize>> {
    require_nodes(g, 1, "eccentricity")?;
    Ok(distances(g)?
        .iter()
        .map(|row| row.iter().copied().max().unwrap_or(0))
        .collect())
}

pub fn diameter(g: &UGraph) -> Result<usize> {
    Ok(eccentricities(g)?.into_iter().max().unwrap_or(0))
}

pub fn radius(g: &UGraph) -> Result<usize> {
    Ok(eccentricities(g)?.into_iter().min().unwrap_or(0))
}

/// `2m / (n(n-1))`.
pub fn density(g: &UGraph) -> Result<f64> {
    require_nodes(g, 2, "density")?;
    let n = g.node_count() as f64;
    Ok(2.0 * g.edge_count() as f64 / (n * (n - 1.0)))
}

/// `m / (n(n-1))` over arcs.
pub fn dag_density(d: &Dag) -> Result<f64> {
    if d.node_count() < 2 {
        return Err(Error::domain("density needs at least 2 nodes"));
    }
    let n = d.node_count() as f64;
    Ok(d.arcs().len() as f64 / (n * (n - 1.0)))
}

/// Mean distance over ordered pairs of distinct nodes.
pub fn average_shortest_path_length(g: &UGraph) -> Result<f64> {
    require_nodes(g, 2, "average shortest path length")?;
    let n = g.node_count();
    let total: usize = distances(g)?.iter().flatten().sum();
    Ok(total as f64 / (n * (n - 1)) as f64)
}

/// `(n-1) / Σ_v d(u, v)` per node.
pub fn closeness(g: &UGraph) -> Result<Vec<f64>> {
    require_nodes(g, 2, "closeness")?;
    let n = g.node_count();
    Ok(distances(g)?
        .iter()
        .map(|row| (n - 1) as f64 / row.iter().sum::<usize>() as f64)
        .collect())
}

pub fn degrees(g: &UGraph) -> Vec<usize> {
    (0..g.node_count()).map(|u| g.degree(u)).collect()
}

/// Betweenness keyed by undirected edge `(min, max)`.
pub type EdgeScores = BTreeMap<(usize, usize), f64>;

/// Unnormalized node and edge betweenness over unordered pairs, by
/// dependency accumulation from every source.
fn brandes(g: &UGraph) -> Result<(Vec<f64>, EdgeScores)> {
    let n = g.node_count();
    let mut node = vec![0.0; n];
    let mut edge: EdgeScores = g.edges().into_iter().map(|e| (e, 0.0)).collect();
    for s in 0..n {
        let mut order = Vec::with_capacity(n);
        let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut sigma = vec![0.0f64; n];
        let mut dist: Vec<Option<usize>> = vec![None; n];
        sigma[s] = 1.0;
        dist[s] = Some(0);
        let mut queue = VecDeque::from([s]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let dv = dist[v].expect("queued nodes are reached");
            for &w in g.neighbors(v) {
                if dist[w].is_none() {
                    dist[w] = Some(dv + 1);
                    queue.push_back(w);
                }
                if dist[w] == Some(dv + 1) {
                    sigma[w] += sigma[v];
                    preds[w].push(v);
                }
            }
        }
        if order.len() != n {
            return Err(Error::domain("graph is disconnected"));
        }
        let mut delta = vec![0.0; n];
        for &w in order.iter().rev() {
            for &v in &preds[w] {
                let c = sigma[v] / sigma[w] * (1.0 + delta[w]);
                *edge.get_mut(&(v.min(w), v.max(w))).expect("edge exists") += c;
                delta[v] += c;
            }
            if w != s {
                node[w] += delta[w];
            }
        }
    }
    // every unordered pair was counted from both ends
    node.iter_mut().for_each(|b| *b /= 2.0);
    edge.values_mut().for_each(|b| *b /= 2.0);
    Ok((node, edge))
}

pub fn node_betweenness(g: &UGraph) -> Result<Vec<f64>> {
    Ok(brandes(g)?.0)
}

/// Keyed by `(u, v)` with `u < v`.
pub fn edge_betweenness(g: &UGraph) -> Result<EdgeScores> {
    Ok(brandes(g)?.1)
}

/// Names of the record fields, in order.
pub const PROPERTY_NAMES: [&str; 23] = [
    "layers",
    "nodes",
    "edges",
    "source_nodes",
    "sink_nodes",
    "diameter",
    "density",
    "average_shortest_path_length",
    "eccentricity_mean",
    "eccentricity_var",
    "eccentricity_std",
    "degree_mean",
    "degree_var",
    "degree_std",
    "closeness_mean",
    "closeness_var",
    "closeness_std",
    "nodes_betweenness_mean",
    "nodes_betweenness_var",
    "nodes_betweenness_std",
    "edge_betweenness_mean",
    "edge_betweenness_var",
    "edge_betweenness_std",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphPropertyRecord {
    pub layers: usize,
    pub nodes: usize,
    pub edges: usize,
    pub source_nodes: usize,
    pub sink_nodes: usize,
    pub diameter: usize,
    pub density: f64,
    pub average_shortest_path_length: f64,
    pub eccentricity_mean: f64,
    pub eccentricity_var: f64,
    pub eccentricity_std: f64,
    pub degree_mean: f64,
    pub degree_var: f64,
    pub degree_std: f64,
    pub closeness_mean: f64,
    pub closeness_var: f64,
    pub closeness_std: f64,
    pub nodes_betweenness_mean: f64,
    pub nodes_betweenness_var: f64,
    pub nodes_betweenness_std: f64,
    pub edge_betweenness_mean: f64,
    pub edge_betweenness_var: f64,
    pub edge_betweenness_std: f64,
}

impl GraphPropertyRecord {
    /// Field values in [`PROPERTY_NAMES`] order.
    pub fn values(&self) -> [f64; 23] {
        [
            self.layers as f64,
            self.nodes as f64,
            self.edges as f64,
            self.source_nodes as f64,
            self.sink_nodes as f64,
            self.diameter as f64,
            self.density,
            self.average_shortest_path_length,
            self.eccentricity_mean,
            self.eccentricity_var,
            self.eccentricity_std,
            self.degree_mean,
            self.degree_var,
            self.degree_std,
            self.closeness_mean,
            self.closeness_var,
            self.closeness_std,
            self.nodes_betweenness_mean,
            self.nodes_betweenness_var,
            self.nodes_betweenness_std,
            self.edge_betweenness_mean,
            self.edge_betweenness_var,
            self.edge_betweenness_std,
        ]
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        PROPERTY_NAMES.iter().position(|&p| p == name).map(|i| self.values()[i])
    }
}

/// The 23 properties of an architecture graph.
pub fn full_record(arch: &ArchGraph) -> Result<GraphPropertyRecord> {
    let g = &arch.base;
    let as_f64 = |v: &[usize]| v.iter().map(|&x| x as f64).collect::<Vec<f64>>();
    let ecc = eccentricities(g)?;
    let ecc_s = stats(&as_f64(&ecc))?;
    let deg_s = stats(&as_f64(&degrees(g)))?;
    let clo_s = stats(&closeness(g)?)?;
    let (nb, eb) = brandes(g)?;
    let nb_s = stats(&nb)?;
    let eb_s = stats(&eb.values().copied().collect::<Vec<f64>>())?;
    Ok(GraphPropertyRecord {
        layers: arch.layer_count(),
        nodes: g.node_count(),
        edges: g.edge_count(),
        source_nodes: arch.dag.sources().len(),
        sink_nodes: arch.dag.sinks().len(),
        diameter: ecc.iter().copied().max().unwrap_or(0),
        density: density(g)?,
        average_shortest_path_length: average_shortest_path_length(g)?,
        eccentricity_mean: ecc_s.mean,
        eccentricity_var: ecc_s.variance,
        eccentricity_std: ecc_s.std,
        degree_mean: deg_s.mean,
        degree_var: deg_s.variance,
        degree_std: deg_s.std,
        closeness_mean: clo_s.mean,
        closeness_var: clo_s.variance,
        closeness_std: clo_s.std,
        nodes_betweenness_mean: nb_s.mean,
        nodes_betweenness_var: nb_s.variance,
        nodes_betweenness_std: nb_s.std,
        edge_betweenness_mean: eb_s.mean,
        edge_betweenness_var: eb_s.variance,
        edge_betweenness_std: eb_s.std,
    })
}
