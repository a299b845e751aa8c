//! Embedding → recurrent layers → linear head, with forward and BPTT.
//!
//! Layers are wired through [`Source`] lists: a layer's input at time `t`
//! is the concatenation of its sources' outputs at `t` (the embedding of the
//! current character, or the hidden state of a lower layer). The head reads
//! an arbitrary selection of `(layer, unit)` hidden states at the last
//! non-padded step. The plain stacked model wires layer `i` to layer `i-1`
//! and reads every unit of the top layer; randomly structured models wire
//! each layer to all lower layers and gate the connections with fixed
//! structural masks.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::cell::{CellKind, LayerGrads, RecurrentLayer, StepCache};
use crate::error::{Error, Result};
use crate::numerics::{Matrix, Rng};

/// Rows of the embedding table: one per 7-bit character code.
pub const VOCAB: usize = 128;
/// Output classes of the head.
pub const CLASSES: usize = 2;
pub const PAD_ID: u8 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Embedding,
    Layer(usize),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecurrentModel {
    pub(crate) embedding: Matrix,
    pub(crate) layers: Vec<RecurrentLayer>,
    pub(crate) inputs: Vec<Vec<Source>>,
    pub(crate) readout: Vec<(usize, usize)>,
    pub(crate) head_w: Matrix,
    pub(crate) head_b: Vec<f64>,
    /// Fixed 0/1 masks over each layer's input-to-hidden block
    /// (`hidden × input`), applied to every gate.
    pub(crate) structure: Vec<Option<Matrix>>,
    #[serde(skip)]
    version: u64,
}

/// Padded character ids plus each row's true length.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub ids: Vec<Vec<u8>>,
    pub lengths: Vec<usize>,
}

impl Batch {
    /// Maps each character to its 7-bit code and right-pads with zeros.
    pub fn from_texts<S: AsRef<str>>(texts: &[S]) -> Result<Batch> {
        let encoded = texts.iter().map(|t| encode(t.as_ref())).collect::<Result<Vec<_>>>()?;
        Batch::from_ids(encoded)
    }

    pub fn from_ids(mut rows: Vec<Vec<u8>>) -> Result<Batch> {
        let lengths: Vec<usize> = rows.iter().map(Vec::len).collect();
        let width = lengths.iter().copied().max().unwrap_or(0);
        for row in &mut rows {
            if let Some(bad) = row.iter().find(|&&id| id as usize >= VOCAB) {
                return Err(Error::input(format!("character id {bad} outside [0, 127]")));
            }
            row.resize(width, PAD_ID);
        }
        Ok(Batch { ids: rows, lengths })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub(crate) fn sequence(&self, i: usize) -> &[u8] {
        &self.ids[i][..self.lengths[i]]
    }
}

pub fn encode(text: &str) -> Result<Vec<u8>> {
    text.chars()
        .map(|c| {
            let code = c as u32;
            if code < VOCAB as u32 {
                Ok(code as u8)
            } else {
                Err(Error::input(format!("character {c:?} is not 7-bit ASCII")))
            }
        })
        .collect()
}

/// Per-step caches of one sequence: `steps[t][layer]`.
#[derive(Debug, Clone)]
pub(crate) struct SequenceTrace {
    pub ids: Vec<u8>,
    pub steps: Vec<Vec<StepCache>>,
}

/// Forward caches for a batch, tied to the parameter version that made them.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    version: u64,
    pub(crate) sequences: Vec<SequenceTrace>,
    pub(crate) readouts: Vec<Vec<f64>>,
    pub(crate) logits: Matrix,
}

impl ForwardTrace {
    pub fn batch_size(&self) -> usize {
        self.sequences.len()
    }

    pub fn logits(&self) -> &Matrix {
        &self.logits
    }
}

/// Gradients with the same layout as the model's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub embedding: Matrix,
    pub layers: Vec<LayerGrads>,
    pub head_w: Matrix,
    pub head_b: Vec<f64>,
}

impl Gradients {
    /// Flat views in the order of [`RecurrentModel::tensors`].
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = vec![self.embedding.as_slice()];
        for l in &self.layers {
            out.extend(l.weights.iter().map(Matrix::as_slice));
            out.extend(l.biases.iter().map(Vec::as_slice));
        }
        out.push(self.head_w.as_slice());
        out.push(&self.head_b);
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

fn softmax_row(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Mean over rows of `-log softmax(logits)[label]`.
pub fn cross_entropy(logits: &Matrix, labels: &[u8]) -> Result<f64> {
    if logits.rows() != labels.len() {
        return Err(Error::Shape {
            op: "cross_entropy",
            left: logits.shape(),
            right: (labels.len(), 1),
        });
    }
    if labels.is_empty() {
        return Err(Error::domain("cross entropy of an empty batch"));
    }
    let mut total = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let row = logits.row(i);
        if y as usize >= row.len() {
            return Err(Error::input(format!("label {y} out of range")));
        }
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        total += lse - row[y as usize];
    }
    Ok(total / labels.len() as f64)
}

/// Index of the largest logit in each row (first wins on ties).
pub fn argmax_rows(logits: &Matrix) -> Vec<u8> {
    (0..logits.rows())
        .map(|i| {
            let row = logits.row(i);
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best as u8
        })
        .collect()
}

impl PartialEq for RecurrentModel {
    /// Parameter and wiring equality; the mutation counter is ignored.
    fn eq(&self, other: &Self) -> bool {
        self.embedding == other.embedding
            && self.layers == other.layers
            && self.inputs == other.inputs
            && self.readout == other.readout
            && self.head_w == other.head_w
            && self.head_b == other.head_b
            && self.structure == other.structure
    }
}

impl RecurrentModel {
    /// Conventional stacked model: embedding (`VOCAB × d_emb`, standard
    /// normal), layers of the given hidden sizes each fed by the one below,
    /// and a head over the top layer.
    pub fn stacked(kind: CellKind, d_emb: usize, hidden: &[usize], rng: &mut Rng) -> Result<Self> {
        if hidden.is_empty() || d_emb == 0 {
            return Err(Error::domain("a stacked model needs d_emb > 0 and at least one layer"));
        }
        let mut layers = Vec::with_capacity(hidden.len());
        let mut inputs = Vec::with_capacity(hidden.len());
        let mut input_size = d_emb;
        for (i, &h) in hidden.iter().enumerate() {
            layers.push(RecurrentLayer::new(kind, input_size, h, rng)?);
            inputs.push(vec![if i == 0 {
                Source::Embedding
            } else {
                Source::Layer(i - 1)
            }]);
            input_size = h;
        }
        let top = hidden.len() - 1;
        let readout = (0..hidden[top]).map(|u| (top, u)).collect();
        let embedding = Matrix::standard_normal(VOCAB, d_emb, rng);
        Self::assemble(embedding, layers, inputs, readout, None, rng)
    }

    /// Builds a model with arbitrary wiring. `structure` gives optional
    /// input-block masks per layer. Head weights are uniform on
    /// `(-1/√fan_in, 1/√fan_in)`, head bias zero.
    pub fn assemble(
        embedding: Matrix,
        layers: Vec<RecurrentLayer>,
        inputs: Vec<Vec<Source>>,
        readout: Vec<(usize, usize)>,
        structure: Option<Vec<Option<Matrix>>>,
        rng: &mut Rng,
    ) -> Result<Self> {
        let fan_in = readout.len().max(1);
        let head_w = Matrix::uniform(CLASSES, readout.len(), 1.0 / (fan_in as f64).sqrt(), rng);
        let n = layers.len();
        let mut model = RecurrentModel {
            embedding,
            layers,
            inputs,
            readout,
            head_w,
            head_b: vec![0.0; CLASSES],
            structure: structure.unwrap_or_else(|| vec![None; n]),
            version: 0,
        };
        model.check()?;
        model.enforce_structure();
        Ok(model)
    }

    /// Validates every shape and wiring invariant.
    pub fn check(&self) -> Result<()> {
        if self.embedding.rows() != VOCAB {
            return Err(Error::input(format!(
                "embedding must have {VOCAB} rows, has {}",
                self.embedding.rows()
            )));
        }
        if self.layers.is_empty() {
            return Err(Error::input("model without recurrent layers"));
        }
        if self.inputs.len() != self.layers.len() || self.structure.len() != self.layers.len() {
            return Err(Error::input("wiring does not cover every layer"));
        }
        for (l, layer) in self.layers.iter().enumerate() {
            layer.check()?;
            let mut width = 0;
            for src in &self.inputs[l] {
                width += match *src {
                    Source::Embedding => self.embedding.cols(),
                    Source::Layer(j) if j < l => self.layers[j].hidden_size(),
                    Source::Layer(j) => {
                        return Err(Error::input(format!(
                            "layer {l} reads layer {j}; sources must be lower layers"
                        )))
                    }
                };
            }
            if width != layer.input_size() {
                return Err(Error::Shape {
                    op: "layer wiring",
                    left: (l, width),
                    right: (l, layer.input_size()),
                });
            }
            if let Some(mask) = &self.structure[l] {
                if mask.shape() != (layer.hidden_size(), layer.input_size()) {
                    return Err(Error::Shape {
                        op: "structure mask",
                        left: mask.shape(),
                        right: (layer.hidden_size(), layer.input_size()),
                    });
                }
            }
        }
        if self.readout.is_empty() {
            return Err(Error::input("head reads no units"));
        }
        for &(l, u) in &self.readout {
            if l >= self.layers.len() || u >= self.layers[l].hidden_size() {
                return Err(Error::input(format!("readout ({l},{u}) out of range")));
            }
        }
        if self.head_w.shape() != (CLASSES, self.readout.len()) || self.head_b.len() != CLASSES {
            return Err(Error::Shape {
                op: "head",
                left: self.head_w.shape(),
                right: (CLASSES, self.readout.len()),
            });
        }
        if !self.embedding.is_finite() || !self.head_w.is_finite() {
            return Err(Error::input("non-finite parameters"));
        }
        Ok(())
    }

    pub fn kind(&self) -> CellKind {
        self.layers[0].kind()
    }

    pub fn embedding(&self) -> &Matrix {
        &self.embedding
    }

    pub fn layers(&self) -> &[RecurrentLayer] {
        &self.layers
    }

    pub fn inputs(&self) -> &[Vec<Source>] {
        &self.inputs
    }

    pub fn readout(&self) -> &[(usize, usize)] {
        &self.readout
    }

    pub fn head(&self) -> (&Matrix, &[f64]) {
        (&self.head_w, &self.head_b)
    }

    pub fn structure(&self) -> &[Option<Matrix>] {
        &self.structure
    }

    /// Monotone counter bumped by every parameter mutation.
    pub fn version(&self) -> u64 {
        self.version
    }

    pub(crate) fn touch(&mut self) {
        self.version += 1;
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [RecurrentLayer] {
        self.touch();
        &mut self.layers
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Flat parameter views: embedding, then per layer its gate matrices and
    /// biases, then head weights and head bias.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = vec![self.embedding.as_slice()];
        for l in &self.layers {
            out.extend(l.weights.iter().map(Matrix::as_slice));
            out.extend(l.biases.iter().map(Vec::as_slice));
        }
        out.push(self.head_w.as_slice());
        out.push(&self.head_b);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.touch();
        let mut out: Vec<&mut [f64]> = vec![self.embedding.as_mut_slice()];
        for l in &mut self.layers {
            out.extend(l.weights.iter_mut().map(Matrix::as_mut_slice));
            out.extend(l.biases.iter_mut().map(Vec::as_mut_slice));
        }
        out.push(self.head_w.as_mut_slice());
        out.push(&mut self.head_b);
        out
    }

    pub fn zero_grads(&self) -> Gradients {
        Gradients {
            embedding: Matrix::zeros(self.embedding.rows(), self.embedding.cols()),
            layers: self.layers.iter().map(RecurrentLayer::zero_grads).collect(),
            head_w: Matrix::zeros(self.head_w.rows(), self.head_w.cols()),
            head_b: vec![0.0; self.head_b.len()],
        }
    }

    /// Re-zeroes every input-block weight outside the structural masks.
    pub fn enforce_structure(&mut self) {
        if self.structure.iter().all(Option::is_none) {
            return;
        }
        self.touch();
        for (layer, mask) in self.layers.iter_mut().zip(&self.structure) {
            let Some(mask) = mask else { continue };
            let hs = layer.hidden_size();
            for w in &mut layer.weights {
                for r in 0..hs {
                    let row = w.row_mut(r);
                    for (c, &m) in mask.row(r).iter().enumerate() {
                        if m == 0.0 {
                            row[hs + c] = 0.0;
                        }
                    }
                }
            }
        }
    }

    fn layer_input(&self, l: usize, id: u8, current: &[Vec<f64>]) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.layers[l].input_size());
        for src in &self.inputs[l] {
            match *src {
                Source::Embedding => x.extend_from_slice(self.embedding.row(id as usize)),
                Source::Layer(j) => x.extend_from_slice(&current[j]),
            }
        }
        x
    }

    /// Runs one unpadded sequence from zero state. Returns the head input
    /// taken at the final step, plus the step caches when `keep` is set.
    fn run_sequence(&self, ids: &[u8], keep: bool) -> (Vec<f64>, Vec<Vec<StepCache>>) {
        let n = self.layers.len();
        let mut h: Vec<Vec<f64>> = self.layers.iter().map(|l| vec![0.0; l.hidden_size()]).collect();
        let mut c = h.clone();
        let mut steps = Vec::with_capacity(if keep { ids.len() } else { 0 });
        for &id in ids {
            let mut row = Vec::with_capacity(n);
            for l in 0..n {
                let x = self.layer_input(l, id, &h);
                let cache = self.layers[l].step(&x, &h[l], &c[l]);
                h[l].clone_from(&cache.h);
                if !cache.c.is_empty() {
                    c[l].clone_from(&cache.c);
                }
                if keep {
                    row.push(cache);
                }
            }
            if keep {
                steps.push(row);
            }
        }
        let readout = self.readout.iter().map(|&(l, u)| h[l][u]).collect();
        (readout, steps)
    }

    fn head_logits(&self, readout: &[f64], out: &mut [f64]) {
        self.head_w.matvec_into(readout, out);
        for (o, b) in out.iter_mut().zip(&self.head_b) {
            *o += b;
        }
    }

    /// Logits for every row of the batch, with caches for [`Self::backward`].
    pub fn forward(&self, batch: &Batch) -> Result<(Matrix, ForwardTrace)> {
        self.check_batch(batch)?;
        let mut logits = Matrix::zeros(batch.len(), CLASSES);
        let mut sequences = Vec::with_capacity(batch.len());
        let mut readouts = Vec::with_capacity(batch.len());
        for i in 0..batch.len() {
            let ids = batch.sequence(i);
            let (readout, steps) = self.run_sequence(ids, true);
            self.head_logits(&readout, logits.row_mut(i));
            sequences.push(SequenceTrace {
                ids: ids.to_vec(),
                steps,
            });
            readouts.push(readout);
        }
        let trace = ForwardTrace {
            version: self.version,
            sequences,
            readouts,
            logits: logits.clone(),
        };
        Ok((logits, trace))
    }

    /// Logits only; no caches kept.
    pub fn logits(&self, batch: &Batch) -> Result<Matrix> {
        self.check_batch(batch)?;
        let mut logits = Matrix::zeros(batch.len(), CLASSES);
        for i in 0..batch.len() {
            let (readout, _) = self.run_sequence(batch.sequence(i), false);
            self.head_logits(&readout, logits.row_mut(i));
        }
        Ok(logits)
    }

    fn check_batch(&self, batch: &Batch) -> Result<()> {
        if batch.lengths.len() != batch.ids.len() {
            return Err(Error::input("batch lengths do not match rows"));
        }
        for (row, &len) in batch.ids.iter().zip(&batch.lengths) {
            if len == 0 || len > row.len() {
                return Err(Error::input(format!("invalid sequence length {len}")));
            }
            if let Some(bad) = row.iter().find(|&&id| id as usize >= VOCAB) {
                return Err(Error::input(format!("character id {bad} outside [0, 127]")));
            }
        }
        Ok(())
    }

    /// Exact gradients of the mean cross-entropy over the traced batch.
    pub fn backward(&self, trace: &ForwardTrace, labels: &[u8]) -> Result<Gradients> {
        if trace.version != self.version {
            return Err(Error::contract(
                "forward trace is stale: parameters changed since it was recorded",
            ));
        }
        if trace.sequences.len() != labels.len() {
            return Err(Error::contract(format!(
                "trace holds {} sequences but {} labels were given",
                trace.sequences.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y as usize >= CLASSES) {
            return Err(Error::input(format!("label {bad} out of range")));
        }
        let mut grads = self.zero_grads();
        let scale = 1.0 / labels.len() as f64;
        for (i, seq) in trace.sequences.iter().enumerate() {
            let mut dlogits = softmax_row(trace.logits.row(i));
            dlogits[labels[i] as usize] -= 1.0;
            dlogits.iter_mut().for_each(|d| *d *= scale);
            self.backward_sequence(seq, &trace.readouts[i], &dlogits, &mut grads);
        }
        Ok(grads)
    }

    fn backward_sequence(&self, seq: &SequenceTrace, readout: &[f64], dlogits: &[f64], grads: &mut Gradients) {
        grads.head_w.add_outer(dlogits, readout);
        for (b, d) in grads.head_b.iter_mut().zip(dlogits) {
            *b += d;
        }
        let mut dread = vec![0.0; readout.len()];
        self.head_w.matvec_t_acc(dlogits, &mut dread);

        let n = self.layers.len();
        let mut dh_next: Vec<Vec<f64>> = self.layers.iter().map(|l| vec![0.0; l.hidden_size()]).collect();
        let mut dc_next = dh_next.clone();
        let t_last = seq.steps.len() - 1;

        for t in (0..=t_last).rev() {
            let mut dh = dh_next.clone();
            if t == t_last {
                for (&(l, u), d) in self.readout.iter().zip(&dread) {
                    dh[l][u] += d;
                }
            }
            for l in (0..n).rev() {
                let (dprev, dcprev, dx) =
                    self.layers[l].backward_step(&seq.steps[t][l], &dh[l], &dc_next[l], &mut grads.layers[l]);
                dh_next[l] = dprev;
                if !dcprev.is_empty() {
                    dc_next[l] = dcprev;
                }
                let mut offset = 0;
                for src in &self.inputs[l] {
                    match *src {
                        Source::Embedding => {
                            let width = self.embedding.cols();
                            let row = grads.embedding.row_mut(seq.ids[t] as usize);
                            for (g, d) in row.iter_mut().zip(&dx[offset..offset + width]) {
                                *g += d;
                            }
                            offset += width;
                        }
                        Source::Layer(j) => {
                            let width = self.layers[j].hidden_size();
                            for (g, d) in dh[j].iter_mut().zip(&dx[offset..offset + width]) {
                                *g += d;
                            }
                            offset += width;
                        }
                    }
                }
            }
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.save_with_banner(path, None)
    }

    /// Like [`save`](Self::save), recording `banner` in the checkpoint's
    /// `banner` field.
    pub fn save_with_banner(&self, path: &Path, banner: Option<&str>) -> Result<()> {
        let mut ckpt = Checkpoint::new(self);
        ckpt.banner = banner.map(str::to_string);
        let mut f = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut f, &ckpt)?;
        f.write_all(b"\n")?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ckpt: Checkpoint = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        ckpt.into_model()
    }
}

const CHECKPOINT_FORMAT: &str = "sparse-rnn-checkpoint";

/// On-disk container: a format tag, the cell kind and layer sizes, then
/// every parameter array with explicit `rows`/`cols` headers.
#[derive(Debug, Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    banner: Option<String>,
    kind: CellKind,
    hidden_sizes: Vec<usize>,
    model: RecurrentModel,
}

impl Checkpoint {
    fn new(model: &RecurrentModel) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: 1,
            banner: None,
            kind: model.kind(),
            hidden_sizes: model.layers.iter().map(RecurrentLayer::hidden_size).collect(),
            model: model.clone(),
        }
    }

    fn into_model(self) -> Result<RecurrentModel> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::Parse(format!("not a checkpoint: format {:?}", self.format)));
        }
        self.model.check()?;
        let sizes: Vec<usize> = self.model.layers.iter().map(RecurrentLayer::hidden_size).collect();
        if self.model.kind() != self.kind || sizes != self.hidden_sizes {
            return Err(Error::Parse("checkpoint header disagrees with its payload".into()));
        }
        Ok(self.model)
    }
}
