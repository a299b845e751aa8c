//! Trains one stacked model on a generated Reber dataset and prints the
//! per-epoch history.
//!
//! cargo run --release -p sparse-rnn --example train_base -- gru 15

use std::time::Instant;

use sparse_rnn::reber::build_dataset;
use sparse_rnn::recurrent::{evaluate_encoded, CellKind, EncodedSplit, TrainConfig, Trainer};
use sparse_rnn::{RecurrentModel, Rng};

fn main() -> sparse_rnn::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let kind: CellKind = args.get(1).map(String::as_str).unwrap_or("gru").parse()?;
    let epochs = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(10);
    let seed = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(1);

    let data = build_dataset(8000, seed, 11)?;
    let train = EncodedSplit::new(&data.train)?;
    let test = EncodedSplit::new(&data.test)?;
    let mut rng = Rng::new(seed);
    let mut model = RecurrentModel::stacked(kind, 32, &[32, 32], &mut rng)?;
    let mut trainer = Trainer::new(&model, TrainConfig::default());
    for epoch in 1..=epochs {
        let start = Instant::now();
        let loss = trainer.epoch(&mut model, &train, &mut rng, &mut |_| {})?;
        let acc = evaluate_encoded(&model, &test)?;
        println!(
            "{kind} epoch {epoch:>2} loss {loss:.4} acc {acc:.4} ({:.1}s)",
            start.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
