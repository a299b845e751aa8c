//! Trains a small corpus of randomly structured models and prints how
//! test accuracy correlates with node count and betweenness variance.
//!
//! cargo run --release -p sparse-rnn --example randstruct_probe -- gru 20 4000 1

use std::time::Instant;

use sparse_rnn::analysis::pearson;
use sparse_rnn::graph::{run_random_experiments, RandStructConfig};
use sparse_rnn::reber::build_dataset;
use sparse_rnn::recurrent::{CellKind, EncodedSplit};

fn main() -> sparse_rnn::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let kind: CellKind = args.get(1).map(String::as_str).unwrap_or("gru").parse()?;
    let count = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(20);
    let total = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(4000);
    let seed = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(1);
    let d_emb = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(32);

    let data = build_dataset(total, seed, 11)?;
    let train = EncodedSplit::new(&data.train)?;
    let test = EncodedSplit::new(&data.test)?;
    let cfg = RandStructConfig {
        count_per_family: count,
        d_emb,
        ..Default::default()
    };
    let start = Instant::now();
    let records = run_random_experiments(kind, &train, &test, &cfg, seed)?;
    for r in &records {
        println!(
            "{} n={:>2} layers={:>2} src={} sink={:>2} nbvar={:>8.1} acc={:.4}",
            r.family,
            r.properties.nodes,
            r.properties.layers,
            r.properties.source_nodes,
            r.properties.sink_nodes,
            r.properties.nodes_betweenness_var,
            r.test_acc
        );
    }
    let acc: Vec<f64> = records.iter().map(|r| r.test_acc).collect();
    for name in [
        "nodes",
        "nodes_betweenness_var",
        "layers",
        "source_nodes",
        "sink_nodes",
        "density",
    ] {
        let x: Vec<f64> = records.iter().map(|r| r.properties.get(name).unwrap()).collect();
        println!("r({name}, acc) = {:+.3}", pearson(&x, &acc)?);
    }
    println!("{} runs in {:.0}s", records.len(), start.elapsed().as_secs_f64());
    Ok(())
}
