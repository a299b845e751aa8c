//! Magnitude pruning of recurrent weights, mask-preserving retraining and
//! the percent sweep.
//!
//! Every gate matrix of a layer is `hidden × (hidden + input)` and acts on
//! `[h_prev, x]`, so the hidden-to-hidden weights are the first `hidden`
//! columns and the input-to-hidden weights the remaining ones.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{derive_seed, percentile, Matrix, Rng};
use crate::parallel::par_map;
use crate::recurrent::{
    evaluate_encoded, CellKind, EncodedSplit, EpochRecord, RecurrentLayer, RecurrentModel, TrainConfig, Trainer,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PruneTarget {
    InputToHidden,
    HiddenToHidden,
    Both,
}

impl PruneTarget {
    pub const ALL: [PruneTarget; 3] = [
        PruneTarget::InputToHidden,
        PruneTarget::HiddenToHidden,
        PruneTarget::Both,
    ];

    pub fn roles(self) -> &'static [WeightRole] {
        match self {
            PruneTarget::InputToHidden => &[WeightRole::InputToHidden],
            PruneTarget::HiddenToHidden => &[WeightRole::HiddenToHidden],
            PruneTarget::Both => &[WeightRole::InputToHidden, WeightRole::HiddenToHidden],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PruneTarget::InputToHidden => "i2h",
            PruneTarget::HiddenToHidden => "h2h",
            PruneTarget::Both => "both",
        }
    }
}

impl fmt::Display for PruneTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PruneTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "i2h" | "input_to_hidden" => Ok(PruneTarget::InputToHidden),
            "h2h" | "hidden_to_hidden" => Ok(PruneTarget::HiddenToHidden),
            "both" => Ok(PruneTarget::Both),
            other => Err(Error::input(format!("unknown prune target {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightRole {
    InputToHidden,
    HiddenToHidden,
}

impl WeightRole {
    pub fn columns(self, layer: &RecurrentLayer) -> Range<usize> {
        let h = layer.hidden_size();
        match self {
            WeightRole::HiddenToHidden => 0..h,
            WeightRole::InputToHidden => h..h + layer.input_size(),
        }
    }

    fn short(self) -> &'static str {
        match self {
            WeightRole::InputToHidden => "ih",
            WeightRole::HiddenToHidden => "hh",
        }
    }
}

/// Absolute values of one targeted block, row by row.
fn block_abs(layer: &RecurrentLayer, gate: usize, role: WeightRole) -> impl Iterator<Item = f64> + '_ {
    let w = &layer.weights()[gate];
    let cols = role.columns(layer);
    (0..w.rows()).flat_map(move |r| w.row(r)[cols.clone()].iter().map(|v| v.abs()))
}

fn targeted_abs(layer: &RecurrentLayer, target: PruneTarget) -> Vec<f64> {
    let mut out = Vec::new();
    for gate in 0..layer.weights().len() {
        for &role in target.roles() {
            out.extend(block_abs(layer, gate, role));
        }
    }
    out
}

fn check_percent(percent: u32) -> Result<()> {
    if (1..=100).contains(&percent) {
        Ok(())
    } else {
        Err(Error::domain(format!("prune percent {percent} outside [1, 100]")))
    }
}

/// Percentile of the absolute values of all targeted weights, pooled over
/// every recurrent layer.
pub fn compute_threshold(model: &RecurrentModel, percent: u32, target: PruneTarget) -> Result<f64> {
    check_percent(percent)?;
    let pooled: Vec<f64> = model.layers().iter().flat_map(|l| targeted_abs(l, target)).collect();
    percentile(&pooled, percent as f64)
}

/// One threshold per layer, each over that layer's targeted weights only.
pub fn compute_layer_thresholds(model: &RecurrentModel, percent: u32, target: PruneTarget) -> Result<Vec<f64>> {
    check_percent(percent)?;
    model
        .layers()
        .iter()
        .map(|l| percentile(&targeted_abs(l, target), percent as f64))
        .collect()
}

/// Binary mask over one block of one gate matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockMask {
    pub layer: usize,
    pub gate: usize,
    pub role: WeightRole,
    pub mask: Matrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskSet {
    pub target: PruneTarget,
    pub percent: Option<u32>,
    /// Threshold used for each layer; identical entries when pooled.
    pub thresholds: Vec<f64>,
    pub masks: Vec<BlockMask>,
}

/// Masks with 0 where `|w| < threshold` and 1 elsewhere, for every targeted
/// block. Untargeted blocks get no mask.
pub fn build_masks(model: &RecurrentModel, threshold: f64, target: PruneTarget) -> MaskSet {
    let thresholds = vec![threshold; model.layers().len()];
    masks_from_thresholds(model, thresholds, target)
}

pub fn build_layer_masks(model: &RecurrentModel, thresholds: &[f64], target: PruneTarget) -> Result<MaskSet> {
    if thresholds.len() != model.layers().len() {
        return Err(Error::input(format!(
            "{} thresholds for {} layers",
            thresholds.len(),
            model.layers().len()
        )));
    }
    Ok(masks_from_thresholds(model, thresholds.to_vec(), target))
}

fn masks_from_thresholds(model: &RecurrentModel, thresholds: Vec<f64>, target: PruneTarget) -> MaskSet {
    let mut masks = Vec::new();
    for (li, layer) in model.layers().iter().enumerate() {
        let t = thresholds[li];
        for gate in 0..layer.weights().len() {
            for &role in target.roles() {
                let w = &layer.weights()[gate];
                let cols = role.columns(layer);
                let mut mask = Matrix::ones(w.rows(), cols.len());
                for r in 0..w.rows() {
                    for (c, v) in w.row(r)[cols.clone()].iter().enumerate() {
                        if v.abs() < t {
                            mask[(r, c)] = 0.0;
                        }
                    }
                }
                masks.push(BlockMask {
                    layer: li,
                    gate,
                    role,
                    mask,
                });
            }
        }
    }
    MaskSet {
        target,
        percent: None,
        thresholds,
        masks,
    }
}

/// Threshold plus masks at `percent`, pooled or per layer.
pub fn prune_masks(model: &RecurrentModel, percent: u32, target: PruneTarget, per_layer: bool) -> Result<MaskSet> {
    let mut set = if per_layer {
        build_layer_masks(model, &compute_layer_thresholds(model, percent, target)?, target)?
    } else {
        build_masks(model, compute_threshold(model, percent, target)?, target)
    };
    set.percent = Some(percent);
    Ok(set)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockSparsity {
    /// `layer{l}.{gate}.{ih|hh}`
    pub name: String,
    pub zeros: usize,
    pub total: usize,
}

impl BlockSparsity {
    pub fn zero_fraction(&self) -> f64 {
        self.zeros as f64 / self.total.max(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SparsityReport {
    pub blocks: Vec<BlockSparsity>,
}

impl SparsityReport {
    /// Zero fraction over all masked blocks together.
    pub fn zero_fraction(&self) -> f64 {
        let zeros: usize = self.blocks.iter().map(|b| b.zeros).sum();
        let total: usize = self.blocks.iter().map(|b| b.total).sum();
        zeros as f64 / total.max(1) as f64
    }
}

const MASK_FORMAT: &str = "sparse-rnn-masks";

#[derive(Serialize, Deserialize)]
struct MaskFile {
    format: String,
    version: u32,
    masks: MaskSet,
}

impl MaskSet {
    /// Confirms every mask matches the shape of the block it covers.
    pub fn check(&self, model: &RecurrentModel) -> Result<()> {
        for m in &self.masks {
            let layer = model
                .layers()
                .get(m.layer)
                .ok_or_else(|| Error::input(format!("mask for missing layer {}", m.layer)))?;
            let w = layer
                .weights()
                .get(m.gate)
                .ok_or_else(|| Error::input(format!("mask for missing gate {} of layer {}", m.gate, m.layer)))?;
            let expected = (w.rows(), m.role.columns(layer).len());
            if m.mask.shape() != expected {
                return Err(Error::Shape {
                    op: "apply_masks",
                    left: expected,
                    right: m.mask.shape(),
                });
            }
        }
        Ok(())
    }

    /// Zeroes every masked weight. Assumes `check` has passed.
    pub fn enforce(&self, model: &mut RecurrentModel) {
        let layers = model.layers_mut();
        for m in &self.masks {
            let layer = &mut layers[m.layer];
            let cols = m.role.columns(layer);
            let w = &mut layer.weights[m.gate];
            for r in 0..w.rows() {
                let row = &mut w.row_mut(r)[cols.clone()];
                for (v, &keep) in row.iter_mut().zip(m.mask.row(r)) {
                    if keep == 0.0 {
                        *v = 0.0;
                    }
                }
            }
        }
    }

    /// Zero counts of the masked blocks as they currently stand in `model`.
    pub fn report(&self, model: &RecurrentModel) -> SparsityReport {
        let blocks = self
            .masks
            .iter()
            .map(|m| {
                let layer = &model.layers()[m.layer];
                let values: Vec<f64> = block_abs(layer, m.gate, m.role).collect();
                BlockSparsity {
                    name: format!(
                        "layer{}.{}.{}",
                        m.layer,
                        layer.kind().gate_names()[m.gate],
                        m.role.short()
                    ),
                    zeros: values.iter().filter(|v| **v == 0.0).count(),
                    total: values.len(),
                }
            })
            .collect();
        SparsityReport { blocks }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = BufWriter::new(File::create(path)?);
        let file = MaskFile {
            format: MASK_FORMAT.to_string(),
            version: 1,
            masks: self.clone(),
        };
        serde_json::to_writer(&mut f, &file)?;
        f.write_all(b"\n")?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file: MaskFile = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        if file.format != MASK_FORMAT {
            return Err(Error::Parse(format!("not a mask file: format {:?}", file.format)));
        }
        for m in &file.masks.masks {
            if m.mask.as_slice().iter().any(|&v| v != 0.0 && v != 1.0) {
                return Err(Error::Parse("mask entries must be 0 or 1".into()));
            }
        }
        Ok(file.masks)
    }
}

/// Multiplies the targeted weights by their masks and reports the resulting
/// sparsity. Nothing outside the masked blocks is touched.
pub fn apply_masks(model: &mut RecurrentModel, masks: &MaskSet) -> Result<SparsityReport> {
    masks.check(model)?;
    masks.enforce(model);
    Ok(masks.report(model))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrainOutcome {
    /// Epochs trained; 0 when the model already met the target.
    pub epochs_used: usize,
    pub regained: bool,
    pub history: Vec<EpochRecord>,
}

/// Retrains a pruned model, re-zeroing masked weights after every optimizer
/// step, until test accuracy reaches `target_acc` or `max_epochs` pass.
/// `on_epoch` sees the model after each epoch.
#[allow(clippy::too_many_arguments)]
pub fn retrain_masked(
    model: &mut RecurrentModel,
    masks: &MaskSet,
    train: &EncodedSplit,
    test: &EncodedSplit,
    max_epochs: usize,
    target_acc: f64,
    config: TrainConfig,
    rng: &mut Rng,
    on_epoch: &mut dyn FnMut(&RecurrentModel, &EpochRecord),
) -> Result<RetrainOutcome> {
    masks.check(model)?;
    if evaluate_encoded(model, test)? >= target_acc {
        return Ok(RetrainOutcome {
            epochs_used: 0,
            regained: true,
            history: Vec::new(),
        });
    }
    let mut trainer = Trainer::new(model, config);
    let mut history = Vec::new();
    for epoch in 1..=max_epochs {
        let train_loss = trainer.epoch(model, train, rng, &mut |m| masks.enforce(m))?;
        let rec = EpochRecord {
            epoch,
            train_loss,
            test_accuracy: evaluate_encoded(model, test)?,
        };
        on_epoch(model, &rec);
        history.push(rec);
        if rec.test_accuracy >= target_acc {
            return Ok(RetrainOutcome {
                epochs_used: epoch,
                regained: true,
                history,
            });
        }
    }
    Ok(RetrainOutcome {
        epochs_used: max_epochs,
        regained: false,
        history,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub target: PruneTarget,
    pub percents: Vec<u32>,
    pub max_regain_epochs: usize,
    /// Regain bar is the pre-prune accuracy minus this.
    pub tolerance: f64,
    pub per_layer: bool,
    pub train: TrainConfig,
    pub seed: u64,
    pub jobs: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            target: PruneTarget::Both,
            percents: (1..=10).map(|k| k * 10).collect(),
            max_regain_epochs: 10,
            tolerance: 0.01,
            per_layer: false,
            train: TrainConfig::default(),
            seed: 0,
            jobs: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub percent: u32,
    /// Mean of the per-layer thresholds when pruning per layer.
    pub threshold: f64,
    pub zero_fraction: f64,
    pub acc_before: f64,
    pub acc_after: f64,
    /// `None` if the bar was not reached within the epoch budget.
    pub epochs_to_regain: Option<usize>,
    pub final_accuracy: f64,
}

fn sweep_row(
    trained: &RecurrentModel,
    train: &EncodedSplit,
    test: &EncodedSplit,
    cfg: &SweepConfig,
    acc_before: f64,
    percent: u32,
) -> Result<SweepRow> {
    let mut model = trained.clone();
    let masks = prune_masks(&model, percent, cfg.target, cfg.per_layer)?;
    let report = apply_masks(&mut model, &masks)?;
    let acc_after = evaluate_encoded(&model, test)?;
    let mut rng = Rng::new(derive_seed(cfg.seed, percent as u64));
    let outcome = retrain_masked(
        &mut model,
        &masks,
        train,
        test,
        cfg.max_regain_epochs,
        acc_before - cfg.tolerance,
        cfg.train,
        &mut rng,
        &mut |_, _| {},
    )?;
    Ok(SweepRow {
        percent,
        threshold: masks.thresholds.iter().sum::<f64>() / masks.thresholds.len() as f64,
        zero_fraction: report.zero_fraction(),
        acc_before,
        acc_after,
        epochs_to_regain: outcome.regained.then_some(outcome.epochs_used),
        final_accuracy: outcome.history.last().map_or(acc_after, |r| r.test_accuracy),
    })
}

/// For each percent: clone, prune, evaluate, retrain to the regain bar.
/// Rows are independent and run on up to `cfg.jobs` threads; each row seeds
/// its own generator from `cfg.seed` and its percent, so results do not
/// depend on the thread count.
pub fn prune_sweep(
    trained: &RecurrentModel,
    train: &EncodedSplit,
    test: &EncodedSplit,
    cfg: &SweepConfig,
) -> Result<Vec<SweepRow>> {
    for &p in &cfg.percents {
        check_percent(p)?;
    }
    let mut percents = cfg.percents.clone();
    percents.sort_unstable();
    percents.dedup();
    let acc_before = evaluate_encoded(trained, test)?;
    par_map(&percents, cfg.jobs, |&p| {
        sweep_row(trained, train, test, cfg, acc_before, p)
    })
    .into_iter()
    .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub variant: CellKind,
    pub target: PruneTarget,
    pub percent: u32,
    pub threshold: f64,
    pub zero_fraction: f64,
    pub acc_before: f64,
    pub acc_after: f64,
    pub epochs_to_regain: Option<usize>,
}

/// Writes the sweep CSV; an unreached regain bar leaves `epochs_to_regain`
/// empty.
pub fn write_sweep(
    path: &Path,
    variant: CellKind,
    target: PruneTarget,
    rows: &[SweepRow],
    banner: Option<&str>,
) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    if let Some(b) = banner {
        writeln!(out, "# {b}")?;
    }
    {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(&mut out);
        w.write_record([
            "variant",
            "target",
            "percent",
            "threshold",
            "zero_fraction",
            "acc_before",
            "acc_after",
            "epochs_to_regain",
        ])?;
        for r in rows {
            w.serialize(SweepRecord {
                variant,
                target,
                percent: r.percent,
                threshold: r.threshold,
                zero_fraction: r.zero_fraction,
                acc_before: r.acc_before,
                acc_after: r.acc_after,
                epochs_to_regain: r.epochs_to_regain,
            })?;
        }
        w.flush()?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_sweep(path: &Path) -> Result<Vec<SweepRecord>> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}
