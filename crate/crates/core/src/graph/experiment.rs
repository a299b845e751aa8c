//! Training randomly structured models and recording their graph
//! properties next to the accuracy they reach.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{build_model, ArchGraph, GraphFamily, GraphSpec};
use crate::error::{Error, Result};
use crate::metrics::{full_record, GraphPropertyRecord};
use crate::numerics::{derive_seed, Rng};
use crate::parallel::par_map;
use crate::recurrent::{train_encoded, CellKind, EncodedSplit, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandStructConfig {
    pub count_per_family: usize,
    /// Node counts are drawn uniformly from `node_min..node_max`.
    pub node_min: usize,
    pub node_max: usize,
    pub ws_k: usize,
    pub ws_p: f64,
    pub ba_m: usize,
    pub d_emb: usize,
    pub train: TrainConfig,
    pub jobs: usize,
}

impl Default for RandStructConfig {
    fn default() -> Self {
        RandStructConfig {
            count_per_family: 100,
            node_min: 10,
            node_max: 51,
            ws_k: 4,
            ws_p: 0.5,
            ba_m: 2,
            d_emb: 32,
            train: TrainConfig {
                epochs: 15,
                batch_size: 128,
                learning_rate: 0.001,
            },
            jobs: 1,
        }
    }
}

impl RandStructConfig {
    pub fn check(&self) -> Result<()> {
        if self.node_min >= self.node_max {
            return Err(Error::domain(format!(
                "empty node range {}..{}",
                self.node_min, self.node_max
            )));
        }
        if self.node_min <= self.ws_k || self.node_min <= self.ba_m + 1 {
            return Err(Error::domain(format!(
                "node range starting at {} is too small for k={} and m={}",
                self.node_min, self.ws_k, self.ba_m
            )));
        }
        if self.d_emb == 0 || self.train.batch_size == 0 {
            return Err(Error::domain("embedding width and batch size must be positive"));
        }
        Ok(())
    }

    /// Every `(family, seed)` run, alternating families. Seeds are derived
    /// from `base` and the run's position, so the plan for a larger count
    /// starts with the plan for a smaller one.
    pub fn plan(&self, base: u64) -> Vec<(GraphFamily, u64)> {
        (0..self.count_per_family as u64)
            .flat_map(|i| {
                GraphFamily::ALL
                    .iter()
                    .enumerate()
                    .map(move |(f, &family)| (family, derive_seed(base, ((f as u64) << 32) | i)))
            })
            .collect()
    }

    fn spec(&self, family: GraphFamily, n: usize) -> GraphSpec {
        match family {
            GraphFamily::WattsStrogatz => GraphSpec::WattsStrogatz {
                n,
                k: self.ws_k,
                p: self.ws_p,
            },
            GraphFamily::BarabasiAlbert => GraphSpec::BarabasiAlbert { n, m: self.ba_m },
        }
    }
}

/// One line of the records file: the 23 properties plus run identity and
/// accuracy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub variant: CellKind,
    pub family: GraphFamily,
    pub seed: u64,
    #[serde(flatten)]
    pub properties: GraphPropertyRecord,
    pub test_acc: f64,
}

impl ExperimentRecord {
    pub fn to_json_line(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn write_jsonl(out: &mut impl Write, records: &[ExperimentRecord]) -> Result<()> {
        for r in records {
            writeln!(out, "{}", r.to_json_line()?)?;
        }
        Ok(())
    }

    /// Reads JSONL records, skipping blank lines and `#` comment lines.
    pub fn read_jsonl(input: impl BufRead) -> Result<Vec<ExperimentRecord>> {
        let mut out = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let rec =
                serde_json::from_str(&line).map_err(|e| Error::Parse(format!("record on line {}: {e}", i + 1)))?;
            out.push(rec);
        }
        Ok(out)
    }
}

/// Generates, trains and measures the architecture for one planned run.
pub fn run_one(
    family: GraphFamily,
    seed: u64,
    kind: CellKind,
    train: &EncodedSplit,
    test: &EncodedSplit,
    cfg: &RandStructConfig,
) -> Result<ExperimentRecord> {
    let mut rng = Rng::new(seed);
    let n = rng.range(cfg.node_min, cfg.node_max);
    let arch = ArchGraph::generate(cfg.spec(family, n), rng.next_u64())?;
    let properties = full_record(&arch)?;
    let mut model = build_model(&arch, kind, cfg.d_emb, &mut rng)?.model;
    let history = train_encoded(&mut model, train, test, cfg.train, &mut rng, &mut |_| {})?;
    let test_acc = match history.last() {
        Some(r) => r.test_accuracy,
        None => crate::recurrent::evaluate_encoded(&model, test)?,
    };
    Ok(ExperimentRecord {
        variant: kind,
        family,
        seed,
        properties,
        test_acc,
    })
}

/// Runs the given plan on `cfg.jobs` threads; records come back in plan
/// order.
pub fn run_planned(
    plan: &[(GraphFamily, u64)],
    kind: CellKind,
    train: &EncodedSplit,
    test: &EncodedSplit,
    cfg: &RandStructConfig,
) -> Result<Vec<ExperimentRecord>> {
    cfg.check()?;
    par_map(plan, cfg.jobs, |&(family, seed)| {
        run_one(family, seed, kind, train, test, cfg)
    })
    .into_iter()
    .collect()
}

/// `count_per_family` Watts–Strogatz and Barabási–Albert runs, sorted by
/// family and seed.
pub fn run_random_experiments(
    kind: CellKind,
    train: &EncodedSplit,
    test: &EncodedSplit,
    cfg: &RandStructConfig,
    seed: u64,
) -> Result<Vec<ExperimentRecord>> {
    let mut records = run_planned(&cfg.plan(seed), kind, train, test, cfg)?;
    records.sort_by_key(|r| (r.family, r.seed));
    Ok(records)
}
