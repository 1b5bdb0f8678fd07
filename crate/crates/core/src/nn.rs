//! Layers built on the autodiff graph: linear maps, embeddings and stacked
//! GRU / LSTM / Elman recurrent cells.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, ParamId, ParamStore, Var};
use crate::error::{shape_err, Error, Result};
use crate::tensor::{softmax_rows_in_place, Tensor};

/// Uniform initialisation in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
pub fn init_uniform<R: Rng + ?Sized>(shape: &[usize], fan_in: usize, rng: &mut R) -> Tensor {
    let bound = 1.0 / libm::sqrtf(fan_in.max(1) as f32);
    Tensor::from_fn(shape, |_| rng.gen_range(-bound..=bound))
}

/// Standard Gumbel noise `-ln(-ln u)`.
pub fn sample_gumbel<R: Rng + ?Sized>(shape: &[usize], rng: &mut R) -> Tensor {
    Tensor::from_fn(shape, |_| {
        let u: f32 = rng.gen_range(f32::MIN_POSITIVE..1.0);
        -libm::logf(-libm::logf(u))
    })
}

/// `softmax((logits + noise) / temperature)` on plain tensors, row by row.
pub fn gumbel_softmax(logits: &Tensor, temperature: f32, noise: &Tensor) -> Result<Tensor> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::InvalidConfig(format!("temperature must be positive, got {temperature}")));
    }
    if logits.shape() != noise.shape() {
        return shape_err("gumbel_softmax", format!("{:?} vs noise {:?}", logits.shape(), noise.shape()));
    }
    let mut data: Vec<f32> = logits.data().iter().zip(noise.data()).map(|(l, g)| (l + g) / temperature).collect();
    softmax_rows_in_place(&mut data, logits.cols());
    let out = Tensor::new(logits.shape().to_vec(), data)?;
    if !out.is_finite() {
        return Err(Error::NonFinite("gumbel_softmax"));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        rng: &mut R,
    ) -> Self {
        let weight = store.add(format!("{name}.weight"), init_uniform(&[in_dim, out_dim], in_dim, rng));
        let bias = store.add(format!("{name}.bias"), init_uniform(&[1, out_dim], in_dim, rng));
        Self { weight, bias, in_dim, out_dim }
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        let w = g.param(self.weight);
        let b = g.param(self.bias);
        g.affine(x, w, b)
    }
}

/// Feed-forward network with `n_hidden` tanh hidden layers of width
/// `out_dim`, followed by a linear output layer of the same width.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

impl Mlp {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        n_hidden: usize,
        rng: &mut R,
    ) -> Self {
        let layers = (0..=n_hidden)
            .map(|i| Linear::new(store, &format!("{name}.{i}"), if i == 0 { in_dim } else { out_dim }, out_dim, rng))
            .collect();
        Self { layers }
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        let mut h = self.layers[0].forward(g, x)?;
        for layer in &self.layers[1..] {
            let a = g.tanh(h)?;
            h = layer.forward(g, a)?;
        }
        Ok(h)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Embedding {
    pub table: ParamId,
    pub vocab: usize,
    pub dim: usize,
}

impl Embedding {
    /// Table entries are uniform in `±1/sqrt(dim)`.
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, vocab: usize, dim: usize, rng: &mut R) -> Self {
        let table = store.add(format!("{name}.table"), init_uniform(&[vocab, dim], dim, rng));
        Self { table, vocab, dim }
    }

    pub fn lookup(&self, g: &mut Graph<'_>, ids: &[usize]) -> Result<Var> {
        let t = g.param(self.table);
        g.gather(t, ids)
    }

    /// Embeds rows of (possibly relaxed) one-hot vectors: `probs · table`.
    pub fn mix(&self, g: &mut Graph<'_>, probs: Var) -> Result<Var> {
        let t = g.param(self.table);
        g.matmul(probs, t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    #[default]
    Gru,
    Lstm,
    Elman,
}

impl CellKind {
    fn gates(self) -> usize {
        match self {
            CellKind::Gru => 3,
            CellKind::Lstm => 4,
            CellKind::Elman => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CellKind::Gru => "gru",
            CellKind::Lstm => "lstm",
            CellKind::Elman => "elman",
        }
    }
}

impl core::str::FromStr for CellKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gru" => Ok(CellKind::Gru),
            "lstm" => Ok(CellKind::Lstm),
            "elman" | "rnn" => Ok(CellKind::Elman),
            other => Err(Error::InvalidConfig(format!("unknown cell kind {other:?}"))),
        }
    }
}

/// One recurrent layer. Gate blocks are laid out side by side in the
/// weight columns: GRU `[r | z | n]`, LSTM `[i | f | g | o]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RnnLayer {
    pub kind: CellKind,
    pub input_dim: usize,
    pub hidden: usize,
    pub w_input: ParamId,
    pub w_hidden: ParamId,
    pub b_input: ParamId,
    pub b_hidden: ParamId,
}

impl RnnLayer {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        kind: CellKind,
        input_dim: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        let cols = kind.gates() * hidden;
        Self {
            kind,
            input_dim,
            hidden,
            w_input: store.add(format!("{name}.w_input"), init_uniform(&[input_dim, cols], hidden, rng)),
            w_hidden: store.add(format!("{name}.w_hidden"), init_uniform(&[hidden, cols], hidden, rng)),
            b_input: store.add(format!("{name}.b_input"), init_uniform(&[1, cols], hidden, rng)),
            b_hidden: store.add(format!("{name}.b_hidden"), init_uniform(&[1, cols], hidden, rng)),
        }
    }

    /// One step. `c` is the LSTM cell state and is ignored by other kinds.
    pub fn step(&self, g: &mut Graph<'_>, x: Var, h: Var, c: Option<Var>) -> Result<(Var, Option<Var>)> {
        let (xv, hv) = (g.value(x), g.value(h));
        if xv.cols() != self.input_dim || hv.cols() != self.hidden || xv.rows() != hv.rows() {
            return shape_err(
                "rnn_step",
                format!(
                    "{} cell expects input [B, {}] and hidden [B, {}], got {:?} and {:?}",
                    self.kind.name(),
                    self.input_dim,
                    self.hidden,
                    xv.shape(),
                    hv.shape()
                ),
            );
        }
        let wi = g.param(self.w_input);
        let bi = g.param(self.b_input);
        let gx = g.affine(x, wi, bi)?;
        self.step_projected(g, gx, h, c)
    }

    /// One step given the already projected input `x·W_input + b_input`.
    fn step_projected(&self, g: &mut Graph<'_>, gx: Var, h: Var, c: Option<Var>) -> Result<(Var, Option<Var>)> {
        let wh = g.param(self.w_hidden);
        let bh = g.param(self.b_hidden);
        let gh = g.affine(h, wh, bh)?;
        let hs = self.hidden;
        match self.kind {
            CellKind::Elman => {
                let s = g.add(gx, gh)?;
                Ok((g.tanh(s)?, None))
            }
            CellKind::Gru => {
                let xr = g.slice_cols(gx, 0, hs)?;
                let hr = g.slice_cols(gh, 0, hs)?;
                let r = g.add(xr, hr)?;
                let r = g.sigmoid(r)?;
                let xz = g.slice_cols(gx, hs, hs)?;
                let hz = g.slice_cols(gh, hs, hs)?;
                let z = g.add(xz, hz)?;
                let z = g.sigmoid(z)?;
                let xn = g.slice_cols(gx, 2 * hs, hs)?;
                let hn = g.slice_cols(gh, 2 * hs, hs)?;
                let rn = g.mul(r, hn)?;
                let n = g.add(xn, rn)?;
                let n = g.tanh(n)?;
                // h' = n + z ⊙ (h - n)
                let d = g.sub(h, n)?;
                let zd = g.mul(z, d)?;
                Ok((g.add(n, zd)?, None))
            }
            CellKind::Lstm => {
                let c = match c {
                    Some(c) => c,
                    None => return shape_err("rnn_step", "lstm step needs a cell state".into()),
                };
                let s = g.add(gx, gh)?;
                let i = g.slice_cols(s, 0, hs)?;
                let i = g.sigmoid(i)?;
                let f = g.slice_cols(s, hs, hs)?;
                let f = g.sigmoid(f)?;
                let gg = g.slice_cols(s, 2 * hs, hs)?;
                let gg = g.tanh(gg)?;
                let o = g.slice_cols(s, 3 * hs, hs)?;
                let o = g.sigmoid(o)?;
                let fc = g.mul(f, c)?;
                let ig = g.mul(i, gg)?;
                let c2 = g.add(fc, ig)?;
                let tc = g.tanh(c2)?;
                Ok((g.mul(o, tc)?, Some(c2)))
            }
        }
    }
}

/// Hidden (and, for LSTMs, cell) state of every layer of a stacked RNN.
#[derive(Debug, Clone)]
pub struct RnnState {
    pub h: Vec<Var>,
    pub c: Vec<Option<Var>>,
}

/// Stacked recurrent network; each layer's output is the next layer's input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rnn {
    pub kind: CellKind,
    pub hidden: usize,
    pub layers: Vec<RnnLayer>,
}

impl Rnn {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        kind: CellKind,
        n_layers: usize,
        input_dim: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if n_layers == 0 || hidden == 0 || input_dim == 0 {
            return Err(Error::InvalidConfig(format!(
                "rnn needs positive layers/sizes, got layers={n_layers} input={input_dim} hidden={hidden}"
            )));
        }
        let layers = (0..n_layers)
            .map(|l| {
                RnnLayer::new(store, &format!("{name}.{l}"), kind, if l == 0 { input_dim } else { hidden }, hidden, rng)
            })
            .collect();
        Ok(Self { kind, hidden, layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim
    }

    /// All-zero state for a batch.
    pub fn zero_state(&self, g: &mut Graph<'_>, batch: usize) -> Result<RnnState> {
        self.state_from(g, &Tensor::zeros(&[batch, self.hidden]))
    }

    /// Every layer's hidden state starts at `h0`; cell states start at zero.
    pub fn state_from_var(&self, g: &mut Graph<'_>, h0: Var) -> Result<RnnState> {
        let shape = g.value(h0).shape().to_vec();
        if shape.len() != 2 || shape[1] != self.hidden {
            return shape_err("rnn_state", format!("hidden state {shape:?} for hidden size {}", self.hidden));
        }
        let c = if self.kind == CellKind::Lstm {
            let z = g.constant(Tensor::zeros(&shape))?;
            vec![Some(z); self.layers.len()]
        } else {
            vec![None; self.layers.len()]
        };
        Ok(RnnState { h: vec![h0; self.layers.len()], c })
    }

    pub fn state_from(&self, g: &mut Graph<'_>, h0: &Tensor) -> Result<RnnState> {
        let v = g.constant(h0.clone())?;
        self.state_from_var(g, v)
    }

    /// Advances every layer by one step; returns the top layer's output.
    pub fn step(&self, g: &mut Graph<'_>, input: Var, state: &RnnState) -> Result<(Var, RnnState)> {
        if state.h.len() != self.layers.len() {
            return shape_err("rnn_step", format!("{} states for {} layers", state.h.len(), self.layers.len()));
        }
        let mut x = input;
        let mut next = RnnState { h: Vec::with_capacity(self.layers.len()), c: Vec::with_capacity(self.layers.len()) };
        for (l, layer) in self.layers.iter().enumerate() {
            let (h, c) = layer.step(g, x, state.h[l], state.c[l])?;
            next.h.push(h);
            next.c.push(c);
            x = h;
        }
        Ok((x, next))
    }

    /// Runs a whole time-major sequence: rows `t*batch..(t+1)*batch` of
    /// `inputs` are step `t`. Input projections are computed for all steps at
    /// once, layer by layer. Returns the top layer's outputs in the same
    /// layout and the final state.
    pub fn run_sequence(
        &self,
        g: &mut Graph<'_>,
        inputs: Var,
        batch: usize,
        state: &RnnState,
    ) -> Result<(Var, RnnState)> {
        let rows = g.value(inputs).rows();
        if batch == 0 || !rows.is_multiple_of(batch) || g.value(inputs).cols() != self.input_dim() {
            return shape_err(
                "run_sequence",
                format!(
                    "{:?} is not a time-major sequence of batch {batch} x {}",
                    g.value(inputs).shape(),
                    self.input_dim()
                ),
            );
        }
        if state.h.len() != self.layers.len() {
            return shape_err("run_sequence", format!("{} states for {} layers", state.h.len(), self.layers.len()));
        }
        let steps = rows / batch;
        let mut x = inputs;
        let mut next = RnnState { h: Vec::new(), c: Vec::new() };
        for (l, layer) in self.layers.iter().enumerate() {
            let wi = g.param(layer.w_input);
            let bi = g.param(layer.b_input);
            let gx_all = g.affine(x, wi, bi)?;
            let (mut h, mut c) = (state.h[l], state.c[l]);
            let mut outs = Vec::with_capacity(steps);
            for t in 0..steps {
                let gx = g.slice_rows(gx_all, t * batch, batch)?;
                let (h2, c2) = layer.step_projected(g, gx, h, c)?;
                h = h2;
                c = c2;
                outs.push(h);
            }
            next.h.push(h);
            next.c.push(c);
            x = g.concat_rows(&outs)?;
        }
        Ok((x, next))
    }

    /// Snapshot of a state as plain tensors (for carrying across graphs).
    pub fn detach(g: &Graph<'_>, state: &RnnState) -> (Vec<Tensor>, Vec<Option<Tensor>>) {
        (
            state.h.iter().map(|&h| g.value(h).clone()).collect(),
            state.c.iter().map(|c| c.map(|c| g.value(c).clone())).collect(),
        )
    }

    /// Re-enters a detached snapshot into a new graph as constants.
    pub fn attach(g: &mut Graph<'_>, h: &[Tensor], c: &[Option<Tensor>]) -> Result<RnnState> {
        let h = h.iter().map(|t| g.constant(t.clone())).collect::<Result<Vec<_>>>()?;
        let c = c.iter().map(|t| t.as_ref().map(|t| g.constant(t.clone())).transpose()).collect::<Result<Vec<_>>>()?;
        Ok(RnnState { h, c })
    }
}
