//! Single-step forward and backward passes for the four cell kinds.
//!
//! Every gate matrix is shaped `hidden × (hidden + input)` and acts on the
//! concatenation `[h_{t-1}, x_t]`: the first `hidden` columns form the
//! hidden-to-hidden block and the remaining columns the input-to-hidden
//! block. A vanilla cell has a single such matrix, `[W | U]`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellKind {
    RnnTanh,
    RnnRelu,
    Lstm,
    Gru,
}

impl CellKind {
    pub const ALL: [CellKind; 4] = [CellKind::RnnTanh, CellKind::RnnRelu, CellKind::Lstm, CellKind::Gru];

    /// Gate names in storage order.
    pub fn gate_names(self) -> &'static [&'static str] {
        match self {
            CellKind::RnnTanh | CellKind::RnnRelu => &["h"],
            CellKind::Lstm => &["f", "i", "C", "o"],
            CellKind::Gru => &["z", "r", "h"],
        }
    }

    pub fn gate_count(self) -> usize {
        self.gate_names().len()
    }

    pub fn is_gated(self) -> bool {
        matches!(self, CellKind::Lstm | CellKind::Gru)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CellKind::RnnTanh => "rnn_tanh",
            CellKind::RnnRelu => "rnn_relu",
            CellKind::Lstm => "lstm",
            CellKind::Gru => "gru",
        }
    }
}

impl fmt::Display for CellKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CellKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "rnn_tanh" | "tanh" => Ok(CellKind::RnnTanh),
            "rnn_relu" | "relu" => Ok(CellKind::RnnRelu),
            "lstm" => Ok(CellKind::Lstm),
            "gru" => Ok(CellKind::Gru),
            other => Err(Error::input(format!("unknown cell kind {other:?}"))),
        }
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecurrentLayer {
    kind: CellKind,
    input_size: usize,
    hidden_size: usize,
    pub(crate) weights: Vec<Matrix>,
    pub(crate) biases: Vec<Vec<f64>>,
}

/// Everything the backward pass needs from one forward step.
#[derive(Debug, Clone)]
pub(crate) struct StepCache {
    /// `[h_{t-1}, x_t]`
    pub v: Vec<f64>,
    /// Post-activation gate values (empty for vanilla cells).
    pub gates: Vec<Vec<f64>>,
    pub h: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub c: Vec<f64>,
    /// GRU candidate input `[r ∘ h_{t-1}, x_t]`.
    pub u: Vec<f64>,
}

/// Accumulated parameter gradients of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

impl RecurrentLayer {
    /// Weights uniform on `(-1/√hidden, 1/√hidden)`, biases zero.
    pub fn new(kind: CellKind, input_size: usize, hidden_size: usize, rng: &mut Rng) -> Result<Self> {
        if input_size == 0 || hidden_size == 0 {
            return Err(Error::domain("layer sizes must be positive"));
        }
        let bound = 1.0 / (hidden_size as f64).sqrt();
        let weights = (0..kind.gate_count())
            .map(|_| Matrix::uniform(hidden_size, hidden_size + input_size, bound, rng))
            .collect();
        Ok(RecurrentLayer {
            kind,
            input_size,
            hidden_size,
            weights,
            biases: vec![vec![0.0; hidden_size]; kind.gate_count()],
        })
    }

    /// Builds a layer from explicit gate matrices (`hidden × (hidden+input)`)
    /// and biases, in the order given by [`CellKind::gate_names`].
    pub fn from_parts(kind: CellKind, weights: Vec<Matrix>, biases: Vec<Vec<f64>>) -> Result<Self> {
        let first = weights.first().ok_or_else(|| Error::input("layer without weights"))?;
        let hidden_size = first.rows();
        let input_size = first
            .cols()
            .checked_sub(hidden_size)
            .filter(|&n| n > 0)
            .ok_or(Error::Shape {
                op: "layer",
                left: first.shape(),
                right: (hidden_size, hidden_size + 1),
            })?;
        let layer = RecurrentLayer {
            kind,
            input_size,
            hidden_size,
            weights,
            biases,
        };
        layer.check()?;
        Ok(layer)
    }

    pub(crate) fn check(&self) -> Result<()> {
        let n = self.kind.gate_count();
        if self.weights.len() != n || self.biases.len() != n {
            return Err(Error::input(format!(
                "{} layer needs {n} gate matrices and biases",
                self.kind
            )));
        }
        let want = (self.hidden_size, self.hidden_size + self.input_size);
        for w in &self.weights {
            if w.shape() != want {
                return Err(Error::Shape {
                    op: "gate weight",
                    left: w.shape(),
                    right: want,
                });
            }
            if !w.is_finite() {
                return Err(Error::input("non-finite weight"));
            }
        }
        for b in &self.biases {
            if b.len() != self.hidden_size {
                return Err(Error::Shape {
                    op: "gate bias",
                    left: (b.len(), 1),
                    right: (self.hidden_size, 1),
                });
            }
        }
        Ok(())
    }

    pub fn kind(&self) -> CellKind {
        self.kind
    }

    pub fn input_size(&self) -> usize {
        self.input_size
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden_size
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    pub(crate) fn zero_grads(&self) -> LayerGrads {
        LayerGrads {
            weights: self.weights.iter().map(|w| Matrix::zeros(w.rows(), w.cols())).collect(),
            biases: self.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    fn check_step(&self, x: &[f64], h_prev: &[f64]) -> Result<()> {
        if x.len() != self.input_size {
            return Err(Error::Shape {
                op: "step input",
                left: (x.len(), 1),
                right: (self.input_size, 1),
            });
        }
        if h_prev.len() != self.hidden_size {
            return Err(Error::Shape {
                op: "step hidden state",
                left: (h_prev.len(), 1),
                right: (self.hidden_size, 1),
            });
        }
        Ok(())
    }

    fn require(&self, ok: bool, op: &str) -> Result<()> {
        if ok {
            Ok(())
        } else {
            Err(Error::input(format!("{op} called on a {} layer", self.kind)))
        }
    }

    /// `h_t = e(U x_t + W h_{t-1} + b_h)` with `e` = tanh or ReLU.
    pub fn rnn_step(&self, x: &[f64], h_prev: &[f64]) -> Result<Vec<f64>> {
        self.require(!self.kind.is_gated(), "rnn_step")?;
        self.check_step(x, h_prev)?;
        Ok(self.step(x, h_prev, &[]).h)
    }

    /// Returns `(h_t, C_t)`.
    pub fn lstm_step(&self, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.require(self.kind == CellKind::Lstm, "lstm_step")?;
        self.check_step(x, h_prev)?;
        if c_prev.len() != self.hidden_size {
            return Err(Error::Shape {
                op: "step cell state",
                left: (c_prev.len(), 1),
                right: (self.hidden_size, 1),
            });
        }
        let cache = self.step(x, h_prev, c_prev);
        Ok((cache.h, cache.c))
    }

    pub fn gru_step(&self, x: &[f64], h_prev: &[f64]) -> Result<Vec<f64>> {
        self.require(self.kind == CellKind::Gru, "gru_step")?;
        self.check_step(x, h_prev)?;
        Ok(self.step(x, h_prev, &[]).h)
    }

    /// Unchecked step; shapes are guaranteed by the caller.
    pub(crate) fn step(&self, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> StepCache {
        let hs = self.hidden_size;
        let mut v = Vec::with_capacity(hs + self.input_size);
        v.extend_from_slice(h_prev);
        v.extend_from_slice(x);

        let affine = |g: usize, input: &[f64]| {
            let mut a = vec![0.0; hs];
            self.weights[g].matvec_into(input, &mut a);
            for (ai, bi) in a.iter_mut().zip(&self.biases[g]) {
                *ai += bi;
            }
            a
        };

        match self.kind {
            CellKind::RnnTanh | CellKind::RnnRelu => {
                let mut h = affine(0, &v);
                if self.kind == CellKind::RnnTanh {
                    h.iter_mut().for_each(|a| *a = a.tanh());
                } else {
                    h.iter_mut().for_each(|a| *a = a.max(0.0));
                }
                StepCache {
                    v,
                    gates: Vec::new(),
                    h,
                    c_prev: Vec::new(),
                    c: Vec::new(),
                    u: Vec::new(),
                }
            }
            CellKind::Lstm => {
                let mut f = affine(0, &v);
                let mut i = affine(1, &v);
                let mut g = affine(2, &v);
                let mut o = affine(3, &v);
                f.iter_mut().for_each(|a| *a = sigmoid(*a));
                i.iter_mut().for_each(|a| *a = sigmoid(*a));
                g.iter_mut().for_each(|a| *a = a.tanh());
                o.iter_mut().for_each(|a| *a = sigmoid(*a));
                let c: Vec<f64> = (0..hs).map(|k| f[k] * c_prev[k] + i[k] * g[k]).collect();
                let h = (0..hs).map(|k| o[k] * c[k].tanh()).collect();
                StepCache {
                    v,
                    gates: vec![f, i, g, o],
                    h,
                    c_prev: c_prev.to_vec(),
                    c,
                    u: Vec::new(),
                }
            }
            CellKind::Gru => {
                let mut z = affine(0, &v);
                let mut r = affine(1, &v);
                z.iter_mut().for_each(|a| *a = sigmoid(*a));
                r.iter_mut().for_each(|a| *a = sigmoid(*a));
                let mut u = Vec::with_capacity(v.len());
                u.extend(r.iter().zip(h_prev).map(|(r, h)| r * h));
                u.extend_from_slice(x);
                let mut n = affine(2, &u);
                n.iter_mut().for_each(|a| *a = a.tanh());
                let h = (0..hs).map(|k| (1.0 - z[k]) * h_prev[k] + z[k] * n[k]).collect();
                StepCache {
                    v,
                    gates: vec![z, r, n],
                    h,
                    c_prev: Vec::new(),
                    c: Vec::new(),
                    u,
                }
            }
        }
    }

    /// Backpropagates one step. `dh` is the total gradient reaching `h_t`,
    /// `dc_next` the gradient reaching `C_t` from step `t+1` (LSTM only).
    /// Returns `(dh_prev, dc_prev, dx)` and accumulates into `grads`.
    pub(crate) fn backward_step(
        &self,
        cache: &StepCache,
        dh: &[f64],
        dc_next: &[f64],
        grads: &mut LayerGrads,
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let hs = self.hidden_size;
        let mut dv = vec![0.0; hs + self.input_size];
        let mut dc_prev = Vec::new();

        match self.kind {
            CellKind::RnnTanh | CellKind::RnnRelu => {
                let da: Vec<f64> = if self.kind == CellKind::RnnTanh {
                    dh.iter().zip(&cache.h).map(|(d, h)| d * (1.0 - h * h)).collect()
                } else {
                    dh.iter()
                        .zip(&cache.h)
                        .map(|(&d, &h)| if h > 0.0 { d } else { 0.0 })
                        .collect()
                };
                accumulate(grads, 0, &da, &cache.v);
                self.weights[0].matvec_t_acc(&da, &mut dv);
            }
            CellKind::Lstm => {
                let [f, i, g, o] = [&cache.gates[0], &cache.gates[1], &cache.gates[2], &cache.gates[3]];
                let mut da = vec![vec![0.0; hs]; 4];
                dc_prev = vec![0.0; hs];
                for k in 0..hs {
                    let tc = cache.c[k].tanh();
                    let d_o = dh[k] * tc;
                    let dc = dc_next[k] + dh[k] * o[k] * (1.0 - tc * tc);
                    let d_f = dc * cache.c_prev[k];
                    let d_i = dc * g[k];
                    let d_g = dc * i[k];
                    dc_prev[k] = dc * f[k];
                    da[0][k] = d_f * f[k] * (1.0 - f[k]);
                    da[1][k] = d_i * i[k] * (1.0 - i[k]);
                    da[2][k] = d_g * (1.0 - g[k] * g[k]);
                    da[3][k] = d_o * o[k] * (1.0 - o[k]);
                }
                for (gate, d) in da.iter().enumerate() {
                    accumulate(grads, gate, d, &cache.v);
                    self.weights[gate].matvec_t_acc(d, &mut dv);
                }
            }
            CellKind::Gru => {
                let [z, r, n] = [&cache.gates[0], &cache.gates[1], &cache.gates[2]];
                let h_prev = &cache.v[..hs];
                let mut dz = vec![0.0; hs];
                let mut dn = vec![0.0; hs];
                for k in 0..hs {
                    dz[k] = dh[k] * (n[k] - h_prev[k]) * z[k] * (1.0 - z[k]);
                    dn[k] = dh[k] * z[k] * (1.0 - n[k] * n[k]);
                    dv[k] += dh[k] * (1.0 - z[k]);
                }
                accumulate(grads, 2, &dn, &cache.u);
                let mut du = vec![0.0; hs + self.input_size];
                self.weights[2].matvec_t_acc(&dn, &mut du);
                let mut dr = vec![0.0; hs];
                for k in 0..hs {
                    dr[k] = du[k] * h_prev[k] * r[k] * (1.0 - r[k]);
                    dv[k] += du[k] * r[k];
                }
                for (dvk, duk) in dv[hs..].iter_mut().zip(&du[hs..]) {
                    *dvk += duk;
                }
                accumulate(grads, 0, &dz, &cache.v);
                accumulate(grads, 1, &dr, &cache.v);
                self.weights[0].matvec_t_acc(&dz, &mut dv);
                self.weights[1].matvec_t_acc(&dr, &mut dv);
            }
        }

        let dx = dv.split_off(hs);
        (dv, dc_prev, dx)
    }
}

fn accumulate(grads: &mut LayerGrads, gate: usize, da: &[f64], input: &[f64]) {
    grads.weights[gate].add_outer(da, input);
    for (b, d) in grads.biases[gate].iter_mut().zip(da) {
        *b += d;
    }
}
