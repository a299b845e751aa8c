//! Mini-batch training and accuracy evaluation.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{argmax_rows, cross_entropy, encode, Batch, RecurrentModel};
use super::optim::Adam;
use crate::error::{Error, Result};
use crate::numerics::Rng;
use crate::reber::{Dataset, LabeledSequence};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 32,
            learning_rate: 0.001,
        }
    }
}

/// Sequences pre-encoded to character ids.
#[derive(Debug, Clone)]
pub struct EncodedSplit {
    ids: Vec<Vec<u8>>,
    labels: Vec<u8>,
}

impl EncodedSplit {
    pub fn new(seqs: &[LabeledSequence]) -> Result<Self> {
        let mut ids = Vec::with_capacity(seqs.len());
        for s in seqs {
            let e = encode(&s.text)?;
            if e.is_empty() {
                return Err(Error::input("empty sequence"));
            }
            ids.push(e);
        }
        Ok(EncodedSplit {
            ids,
            labels: seqs.iter().map(|s| s.label).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    /// Gathers the given rows, longest first, into a padded batch.
    pub fn batch(&self, rows: &[usize]) -> (Batch, Vec<u8>) {
        let mut order = rows.to_vec();
        order.sort_by_key(|&i| std::cmp::Reverse(self.ids[i].len()));
        let ids = order.iter().map(|&i| self.ids[i].clone()).collect();
        let labels = order.iter().map(|&i| self.labels[i]).collect();
        (Batch::from_ids(ids).expect("ids validated at encoding"), labels)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_accuracy: f64,
}

const EVAL_CHUNK: usize = 256;

pub fn evaluate_encoded(model: &RecurrentModel, split: &EncodedSplit) -> Result<f64> {
    if split.is_empty() {
        return Err(Error::domain("accuracy of an empty split"));
    }
    let mut correct = 0usize;
    let rows: Vec<usize> = (0..split.len()).collect();
    for chunk in rows.chunks(EVAL_CHUNK) {
        let (batch, labels) = split.batch(chunk);
        let pred = argmax_rows(&model.logits(&batch)?);
        correct += pred.iter().zip(&labels).filter(|(p, y)| p == y).count();
    }
    Ok(correct as f64 / split.len() as f64)
}

/// Fraction of argmax predictions equal to the labels.
pub fn evaluate(model: &RecurrentModel, seqs: &[LabeledSequence]) -> Result<f64> {
    evaluate_encoded(model, &EncodedSplit::new(seqs)?)
}

/// Optimizer state plus the batching loop; one instance per training run.
pub struct Trainer {
    config: TrainConfig,
    adam: Adam,
}

impl Trainer {
    pub fn new(model: &RecurrentModel, config: TrainConfig) -> Self {
        Trainer {
            config,
            adam: Adam::new(model, config.learning_rate),
        }
    }

    /// One pass over `train` in shuffled mini-batches. `after_step` runs
    /// after every optimizer update. Returns the mean training loss.
    pub fn epoch(
        &mut self,
        model: &mut RecurrentModel,
        train: &EncodedSplit,
        rng: &mut Rng,
        after_step: &mut dyn FnMut(&mut RecurrentModel),
    ) -> Result<f64> {
        if train.is_empty() {
            return Err(Error::domain("training split is empty"));
        }
        let bs = self.config.batch_size.max(1);
        let mut order: Vec<usize> = (0..train.len()).collect();
        rng.shuffle(&mut order);
        let mut total = 0.0;
        for rows in order.chunks(bs) {
            let (batch, labels) = train.batch(rows);
            let (logits, trace) = model.forward(&batch)?;
            total += cross_entropy(&logits, &labels)? * rows.len() as f64;
            let grads = model.backward(&trace, &labels)?;
            self.adam.step(model, &grads);
            model.enforce_structure();
            after_step(model);
        }
        Ok(total / train.len() as f64)
    }
}

/// Trains for `config.epochs` epochs, evaluating on the test split after
/// each one.
pub fn train(
    model: &mut RecurrentModel,
    dataset: &Dataset,
    config: TrainConfig,
    rng: &mut Rng,
) -> Result<Vec<EpochRecord>> {
    let train = EncodedSplit::new(&dataset.train)?;
    let test = EncodedSplit::new(&dataset.test)?;
    train_encoded(model, &train, &test, config, rng, &mut |_| {})
}

pub fn train_encoded(
    model: &mut RecurrentModel,
    train: &EncodedSplit,
    test: &EncodedSplit,
    config: TrainConfig,
    rng: &mut Rng,
    after_step: &mut dyn FnMut(&mut RecurrentModel),
) -> Result<Vec<EpochRecord>> {
    if config.epochs == 0 {
        return Ok(Vec::new());
    }
    if train.is_empty() {
        return Err(Error::domain("training split is empty"));
    }
    let mut trainer = Trainer::new(model, config);
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let train_loss = trainer.epoch(model, train, rng, after_step)?;
        let test_accuracy = evaluate_encoded(model, test)?;
        history.push(EpochRecord {
            epoch,
            train_loss,
            test_accuracy,
        });
    }
    Ok(history)
}

/// Writes `epoch,train_loss,test_accuracy` rows, optionally preceded by a
/// `#` banner line.
pub fn write_history(path: &Path, history: &[EpochRecord], banner: Option<&str>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    if let Some(b) = banner {
        writeln!(out, "# {b}")?;
    }
    {
        let mut w = csv::Writer::from_writer(&mut out);
        for rec in history {
            w.serialize(rec)?;
        }
        if history.is_empty() {
            w.write_record(["epoch", "train_loss", "test_accuracy"])?;
        }
        w.flush()?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_history(path: &Path) -> Result<Vec<EpochRecord>> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}
