//! Trains a stacked model, then prunes it at 10%..100% and reports the
//! accuracy drop and the epochs needed to regain it.
//!
//! cargo run --release -p sparse-rnn --example prune_probe -- gru both 15 [seed] [regain-bar]

use sparse_rnn::pruning::{prune_sweep, PruneTarget, SweepConfig};
use sparse_rnn::reber::build_dataset;
use sparse_rnn::recurrent::{evaluate_encoded, train_encoded, CellKind, EncodedSplit, TrainConfig};
use sparse_rnn::{RecurrentModel, Rng};

fn main() -> sparse_rnn::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let kind: CellKind = args.get(1).map(String::as_str).unwrap_or("gru").parse()?;
    let target: PruneTarget = args.get(2).map(String::as_str).unwrap_or("both").parse()?;
    let epochs = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(15);
    let seed = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(1);
    let bar: Option<f64> = args.get(5).and_then(|s| s.parse().ok());

    let data = build_dataset(8000, seed, 11)?;
    let train = EncodedSplit::new(&data.train)?;
    let test = EncodedSplit::new(&data.test)?;
    let mut rng = Rng::new(seed);
    let mut model = RecurrentModel::stacked(kind, 32, &[32, 32], &mut rng)?;
    let cfg = TrainConfig {
        epochs,
        ..Default::default()
    };
    let history = train_encoded(&mut model, &train, &test, cfg, &mut rng, &mut |_| {})?;
    println!(
        "{kind} trained: acc {:.4}",
        history.last().map_or(0.0, |r| r.test_accuracy)
    );

    let mut sweep = SweepConfig {
        target,
        seed,
        train: cfg,
        ..Default::default()
    };
    if let Some(bar) = bar {
        sweep.tolerance = evaluate_encoded(&model, &test)? - bar;
        sweep.percents = vec![90, 100];
    }
    for row in prune_sweep(&model, &train, &test, &sweep)? {
        println!(
            "{kind} {target} p={:>3} thr {:.4} zero {:.3} after {:.4} regain {:?} final {:.4}",
            row.percent, row.threshold, row.zero_fraction, row.acc_after, row.epochs_to_regain, row.final_accuracy
        );
    }
    Ok(())
}
