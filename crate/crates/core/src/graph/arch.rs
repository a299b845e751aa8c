//! Recurrent architectures derived from layer-indexed DAGs.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{ba_generate, layer_index, to_dag, ws_generate, Dag, UGraph};
use crate::error::{Error, Result};
use crate::numerics::{Matrix, Rng};
use crate::recurrent::{CellKind, RecurrentLayer, RecurrentModel, Source, VOCAB};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphFamily {
    WattsStrogatz,
    BarabasiAlbert,
}

impl GraphFamily {
    pub const ALL: [GraphFamily; 2] = [GraphFamily::WattsStrogatz, GraphFamily::BarabasiAlbert];

    pub fn as_str(self) -> &'static str {
        match self {
            GraphFamily::WattsStrogatz => "watts_strogatz",
            GraphFamily::BarabasiAlbert => "barabasi_albert",
        }
    }
}

impl fmt::Display for GraphFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GraphFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "ws" | "watts_strogatz" => Ok(GraphFamily::WattsStrogatz),
            "ba" | "barabasi_albert" => Ok(GraphFamily::BarabasiAlbert),
            other => Err(Error::input(format!("unknown graph family {other:?}"))),
        }
    }
}

/// Generator and parameters for one graph.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum GraphSpec {
    WattsStrogatz { n: usize, k: usize, p: f64 },
    BarabasiAlbert { n: usize, m: usize },
}

impl GraphSpec {
    pub fn family(&self) -> GraphFamily {
        match self {
            GraphSpec::WattsStrogatz { .. } => GraphFamily::WattsStrogatz,
            GraphSpec::BarabasiAlbert { .. } => GraphFamily::BarabasiAlbert,
        }
    }

    pub fn generate(&self, rng: &mut Rng) -> Result<UGraph> {
        match *self {
            GraphSpec::WattsStrogatz { n, k, p } => ws_generate(n, k, p, rng),
            GraphSpec::BarabasiAlbert { n, m } => ba_generate(n, m, rng),
        }
    }
}

/// A base graph with its label-ordered DAG and layer indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchGraph {
    pub spec: Option<GraphSpec>,
    pub seed: Option<u64>,
    pub base: UGraph,
    pub dag: Dag,
    pub layer_index: Vec<usize>,
}

impl ArchGraph {
    pub fn from_graph(base: UGraph) -> Self {
        let dag = to_dag(&base);
        let layer_index = layer_index(&dag).expect("label-ordered DAGs are acyclic");
        ArchGraph {
            spec: None,
            seed: None,
            base,
            dag,
            layer_index,
        }
    }

    pub fn generate(spec: GraphSpec, seed: u64) -> Result<Self> {
        let base = spec.generate(&mut Rng::new(seed))?;
        Ok(ArchGraph {
            spec: Some(spec),
            seed: Some(seed),
            ..ArchGraph::from_graph(base)
        })
    }

    pub fn layer_count(&self) -> usize {
        self.layer_index.iter().max().map_or(0, |&m| m + 1)
    }

    /// Nodes of each layer, in label order.
    pub fn layers(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.layer_count()];
        for (v, &l) in self.layer_index.iter().enumerate() {
            out[l].push(v);
        }
        out
    }
}

/// A recurrent model whose units are the graph's nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandStructModel {
    pub model: RecurrentModel,
    /// `(layer, unit)` of every node.
    pub placement: Vec<(usize, usize)>,
}

/// One recurrent layer per layer index, one scalar unit per node, full
/// recurrence within each layer. Layer 0 (the sources) reads the embedding;
/// a later layer reads every lower layer that has an arc into it, through a
/// structural mask that keeps only the arcs. The head reads the sinks.
pub fn build_model(arch: &ArchGraph, kind: CellKind, d_emb: usize, rng: &mut Rng) -> Result<RandStructModel> {
    if arch.base.node_count() == 0 {
        return Err(Error::input("cannot build a model from an empty graph"));
    }
    if d_emb == 0 {
        return Err(Error::domain("embedding width must be positive"));
    }
    let groups = arch.layers();
    let mut placement = vec![(0, 0); arch.base.node_count()];
    for (l, nodes) in groups.iter().enumerate() {
        for (u, &v) in nodes.iter().enumerate() {
            placement[v] = (l, u);
        }
    }
    let parents = arch.dag.parents();

    let mut layers = Vec::with_capacity(groups.len());
    let mut inputs = Vec::with_capacity(groups.len());
    let mut structure = Vec::with_capacity(groups.len());
    for (l, nodes) in groups.iter().enumerate() {
        if l == 0 {
            layers.push(RecurrentLayer::new(kind, d_emb, nodes.len(), rng)?);
            inputs.push(vec![Source::Embedding]);
            structure.push(None);
            continue;
        }
        let mut feeding = vec![false; l];
        for &v in nodes {
            for &u in &parents[v] {
                feeding[placement[u].0] = true;
            }
        }
        let sources: Vec<usize> = (0..l).filter(|&j| feeding[j]).collect();
        let mut offset = vec![0; l];
        let mut width = 0;
        for &j in &sources {
            offset[j] = width;
            width += groups[j].len();
        }
        let mut mask = Matrix::zeros(nodes.len(), width);
        for (row, &v) in nodes.iter().enumerate() {
            for &u in &parents[v] {
                let (j, unit) = placement[u];
                mask[(row, offset[j] + unit)] = 1.0;
            }
        }
        layers.push(RecurrentLayer::new(kind, width, nodes.len(), rng)?);
        inputs.push(sources.into_iter().map(Source::Layer).collect());
        structure.push(Some(mask));
    }
    let readout = arch.dag.sinks().into_iter().map(|v| placement[v]).collect();
    let embedding = Matrix::standard_normal(VOCAB, d_emb, rng);
    let model = RecurrentModel::assemble(embedding, layers, inputs, readout, Some(structure), rng)?;
    Ok(RandStructModel { model, placement })
}
