//! Small recurrent causal language model used by the transfer objective.
//!
//! Corpora are flattened into one token stream (each utterance followed by a
//! separator), split into `batch_size` contiguous lanes and trained with
//! truncated backpropagation through time, carrying hidden state across
//! windows.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, ParamId, ParamStore};
use crate::corpus::{Corpus, Token};
use crate::error::{Error, Result};
use crate::nn::{CellKind, Embedding, Linear, Rnn};
use crate::optim::AdamState;
use crate::rng;
use crate::tensor::Tensor;

/// Stream id marking the end of an utterance.
pub const SEPARATOR: usize = 0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LmSpec {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub layers: usize,
    pub cell: CellKind,
    /// Largest vocabulary (including the separator) the model will index.
    pub vocab_cap: usize,
    pub batch_size: usize,
    /// Truncated-BPTT window length.
    pub bptt: usize,
    pub learning_rate: f32,
    /// Global gradient-norm clip; `0` disables clipping.
    pub grad_clip: f32,
}

impl Default for LmSpec {
    fn default() -> Self {
        Self {
            embed_dim: 64,
            hidden_dim: 128,
            layers: 2,
            cell: CellKind::Gru,
            vocab_cap: 32_768,
            batch_size: 16,
            bptt: 32,
            learning_rate: 2e-3,
            grad_clip: 1.0,
        }
    }
}

impl LmSpec {
    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.hidden_dim == 0 || self.layers == 0 || self.batch_size == 0 || self.bptt == 0 {
            return Err(Error::InvalidConfig("language model sizes must be positive".into()));
        }
        if self.vocab_cap < 2 {
            return Err(Error::InvalidConfig(format!("vocab_cap must be at least 2, got {}", self.vocab_cap)));
        }
        if !(self.learning_rate >= 0.0) || !(self.grad_clip >= 0.0) {
            return Err(Error::InvalidConfig("learning rate and clip must be non-negative".into()));
        }
        Ok(())
    }
}

/// Canonical relabelling of a corpus onto `1..size` by first occurrence.
///
/// Id 0 is the separator. Types beyond the cap share the last id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    map: BTreeMap<Token, usize>,
    size: usize,
    overflowed: bool,
}

impl Vocab {
    pub fn canonical(corpus: &Corpus, cap: usize) -> Result<Self> {
        Self::canonical_prefix(corpus, cap, usize::MAX)
    }

    /// Like [`Vocab::canonical`], but only types within the first `limit`
    /// stream positions are assigned ids.
    pub fn canonical_prefix(corpus: &Corpus, cap: usize, limit: usize) -> Result<Self> {
        if cap < 2 {
            return Err(Error::InvalidConfig(format!("vocab_cap must be at least 2, got {cap}")));
        }
        let mut map = BTreeMap::new();
        let mut next = 1;
        let mut overflowed = false;
        let mut pos = 0;
        'outer: for u in corpus.utterances() {
            for &t in u {
                if pos >= limit {
                    break 'outer;
                }
                pos += 1;
                if map.contains_key(&t) {
                    continue;
                }
                if next < cap - 1 {
                    map.insert(t, next);
                    next += 1;
                } else {
                    map.insert(t, cap - 1);
                    overflowed = true;
                }
            }
            pos += 1;
        }
        let size = if overflowed { cap } else { next };
        Ok(Self { map, size: size.max(2), overflowed })
    }

    /// Number of ids, including the separator.
    pub fn size(&self) -> usize {
        self.size
    }

    /// Whether some types were folded into the shared overflow id.
    pub fn overflowed(&self) -> bool {
        self.overflowed
    }

    /// Flattened stream, cut after `limit` positions. Types without an id
    /// share the last one.
    pub fn encode(&self, corpus: &Corpus, limit: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(limit.min(corpus.n_tokens() + corpus.len()));
        for u in corpus.utterances() {
            out.extend(u.iter().map(|t| self.map.get(t).copied().unwrap_or(self.size - 1)));
            out.push(SEPARATOR);
            if out.len() >= limit {
                out.truncate(limit);
                break;
            }
        }
        out
    }
}

/// Per-lane layout of a stream: `lanes` contiguous segments, each predicting
/// `seg` next tokens.
fn lanes(n: usize, batch: usize) -> Option<(usize, usize)> {
    if n < 2 {
        return None;
    }
    let lanes = batch.min(n - 1);
    Some((lanes, (n - 1) / lanes))
}

/// Detached recurrent state carried between BPTT windows.
type RnnState = (Vec<Tensor>, Vec<Option<Tensor>>);

#[derive(Debug, Clone)]
pub struct CausalLm {
    pub spec: LmSpec,
    pub store: ParamStore,
    pub rnn: Rnn,
    pub embed: Embedding,
    pub out: Linear,
}

impl CausalLm {
    /// Recurrent weights are drawn from `core_seed`, the embedding and output
    /// projection from `lexical_seed`, so the two can be varied independently.
    pub fn new(spec: &LmSpec, vocab: usize, core_seed: u64, lexical_seed: u64) -> Result<Self> {
        spec.validate()?;
        if vocab < 2 || vocab > spec.vocab_cap {
            return Err(Error::InvalidConfig(format!("vocabulary {vocab} outside [2, {}]", spec.vocab_cap)));
        }
        let mut store = ParamStore::new();
        let mut core_rng = rng::seeded(core_seed);
        let rnn =
            Rnn::new(&mut store, "lm.rnn", spec.cell, spec.layers, spec.embed_dim, spec.hidden_dim, &mut core_rng)?;
        let mut lex_rng = rng::seeded(lexical_seed);
        let embed = Embedding::new(&mut store, "lm.embed", vocab, spec.embed_dim, &mut lex_rng);
        let out = Linear::new(&mut store, "lm.out", spec.hidden_dim, vocab, &mut lex_rng);
        Ok(Self { spec: spec.clone(), store, rnn, embed, out })
    }

    pub fn vocab(&self) -> usize {
        self.embed.vocab
    }

    /// Parameters of the recurrent core (transferred between corpora).
    pub fn core_params(&self) -> Vec<ParamId> {
        self.rnn.layers.iter().flat_map(|l| [l.w_input, l.w_hidden, l.b_input, l.b_hidden]).collect()
    }

    /// Embedding and output-projection parameters (re-initialised per corpus).
    pub fn lexical_params(&self) -> Vec<ParamId> {
        alloc::vec![self.embed.table, self.out.weight, self.out.bias]
    }

    /// A copy with the recurrent core kept bit-for-bit and a freshly
    /// initialised embedding and output layer for a `vocab`-sized lexicon.
    pub fn with_fresh_lexicon(&self, vocab: usize, lexical_seed: u64) -> Result<Self> {
        let mut fresh = Self::new(&self.spec, vocab, 0, lexical_seed)?;
        for (dst, src) in fresh.core_params().into_iter().zip(self.core_params()) {
            fresh.store.set(dst, self.store.get(src).clone())?;
        }
        Ok(fresh)
    }

    /// Trains on `stream` for `epochs` passes; returns the mean loss of each pass.
    pub fn train(&mut self, stream: &[usize], epochs: usize) -> Result<Vec<f64>> {
        let Some((lanes, seg)) = lanes(stream.len(), self.spec.batch_size) else {
            return Ok(Vec::new());
        };
        self.check_ids(stream)?;
        let mut adam = AdamState::new(&self.store);
        let mut losses = Vec::with_capacity(epochs);
        for _ in 0..epochs {
            let mut carried: Option<RnnState> = None;
            let (mut total, mut count) = (0.0f64, 0usize);
            let mut start = 0;
            while start < seg {
                let len = self.spec.bptt.min(seg - start);
                let (loss, state, grads) = {
                    let mut g = Graph::new(&self.store);
                    let (ce, st) = self.window(&mut g, stream, lanes, seg, start, len, carried.as_ref())?;
                    let loss = f64::from(g.value(ce).item()?);
                    let grads = g.backward(ce)?;
                    (loss, st, grads)
                };
                let mut grads = grads;
                if self.spec.grad_clip > 0.0 {
                    grads.clip_global_norm(self.spec.grad_clip);
                }
                adam.step(&mut self.store, &grads, self.spec.learning_rate)?;
                total += loss * (len * lanes) as f64;
                count += len * lanes;
                carried = Some(state);
                start += len;
            }
            losses.push(total / count as f64);
        }
        Ok(losses)
    }

    /// Mean next-token cross-entropy (nats) over `stream`.
    pub fn cross_entropy(&self, stream: &[usize]) -> Result<f64> {
        let Some((lanes, seg)) = lanes(stream.len(), self.spec.batch_size) else {
            return Err(Error::InsufficientData(format!("{} stream positions", stream.len())));
        };
        self.check_ids(stream)?;
        let mut carried = None;
        let (mut total, mut count) = (0.0f64, 0usize);
        let mut start = 0;
        while start < seg {
            let len = self.spec.bptt.min(seg - start);
            let mut g = Graph::new(&self.store);
            let (ce, st) = self.window(&mut g, stream, lanes, seg, start, len, carried.as_ref())?;
            total += f64::from(g.value(ce).item()?) * (len * lanes) as f64;
            count += len * lanes;
            carried = Some(st);
            start += len;
        }
        Ok(total / count as f64)
    }

    fn check_ids(&self, stream: &[usize]) -> Result<()> {
        match stream.iter().find(|&&t| t >= self.vocab()) {
            Some(t) => Err(Error::InvalidConfig(format!("stream id {t} outside vocabulary {}", self.vocab()))),
            None => Ok(()),
        }
    }

    /// Loss over one BPTT window of every lane, time-major.
    #[allow(clippy::too_many_arguments)]
    fn window(
        &self,
        g: &mut Graph<'_>,
        stream: &[usize],
        lanes: usize,
        seg: usize,
        start: usize,
        len: usize,
        carried: Option<&RnnState>,
    ) -> Result<(crate::autodiff::Var, RnnState)> {
        let mut inputs = Vec::with_capacity(len * lanes);
        let mut targets = Vec::with_capacity(len * lanes);
        for t in 0..len {
            for b in 0..lanes {
                let pos = b * seg + start + t;
                inputs.push(stream[pos]);
                targets.push(stream[pos + 1]);
            }
        }
        let state = match carried {
            Some((h, c)) => Rnn::attach(g, h, c)?,
            None => self.rnn.zero_state(g, lanes)?,
        };
        let x = self.embed.lookup(g, &inputs)?;
        let (hs, state) = self.rnn.run_sequence(g, x, lanes, &state)?;
        let logits = self.out.forward(g, hs)?;
        let ce = g.cross_entropy(logits, &targets)?;
        Ok((ce, Rnn::detach(g, &state)))
    }
}
