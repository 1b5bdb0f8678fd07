//! The discrimination signalling game.
//!
//! A sender maps an observation (a vector of attribute values) to a
//! fixed-length message; a receiver reads the message and must pick the
//! observation out of a set of candidates. Both agents are trained jointly
//! through a Gumbel-Softmax relaxation of the message tokens.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, ParamStore, Var};
use crate::corpus::{Corpus, Token};
use crate::error::{Error, Result};
use crate::nn::{sample_gumbel, CellKind, Embedding, Linear, Mlp, Rnn};
use crate::optim::{AdamState, LrSchedule};
use crate::rng::{self, substream};
use crate::tensor::{FlushSubnormals, Tensor};

/// Observations sampled for every epoch.
pub const DATASET_SIZE: usize = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GameConfig {
    pub n_attributes: usize,
    pub n_values: usize,
    pub n_distractors: usize,
    pub temperature: f32,
    pub embed_size: usize,
    pub hidden_size: usize,
    pub learning_rate: f32,
    pub vocab_size: usize,
    pub message_length: usize,
    pub n_epochs: usize,
    pub batch_size: usize,
    pub cell: CellKind,
    pub rnn_layers: usize,
    /// Tanh hidden layers in each observation encoder.
    pub fc_layers: usize,
    /// Anneal the learning rate to zero over training with a cosine.
    pub cosine_annealing: bool,
    pub seed: u64,
}

impl Default for GameConfig {
    /// Recommended large-scale settings (12 attributes of 6 values, vocab
    /// 10 000, length 20, 2-layer LSTM with 2 feed-forward layers).
    fn default() -> Self {
        Self {
            n_attributes: 12,
            n_values: 6,
            n_distractors: 23,
            temperature: 2.0,
            embed_size: 128,
            hidden_size: 256,
            learning_rate: 1.79e-3,
            vocab_size: 10_000,
            message_length: 20,
            n_epochs: 1715,
            batch_size: 32,
            cell: CellKind::Lstm,
            rnn_layers: 2,
            fc_layers: 2,
            cosine_annealing: false,
            seed: 0,
        }
    }
}

impl GameConfig {
    /// A small game that trains in seconds on one core.
    pub fn small() -> Self {
        Self {
            n_attributes: 4,
            n_values: 4,
            n_distractors: 5,
            temperature: 1.0,
            embed_size: 64,
            hidden_size: 128,
            learning_rate: 1e-3,
            vocab_size: 64,
            message_length: 6,
            n_epochs: 300,
            batch_size: 32,
            cell: CellKind::Gru,
            rnn_layers: 1,
            fc_layers: 1,
            cosine_annealing: false,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_attributes", self.n_attributes),
            ("n_values", self.n_values),
            ("embed_size", self.embed_size),
            ("hidden_size", self.hidden_size),
            ("message_length", self.message_length),
            ("batch_size", self.batch_size),
            ("rnn_layers", self.rnn_layers),
            ("fc_layers", self.fc_layers),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidConfig(format!("{name} must be at least 1")));
        }
        if self.vocab_size < 2 {
            return Err(Error::InvalidConfig(format!("vocab_size must be at least 2, got {}", self.vocab_size)));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::InvalidConfig(format!("temperature must be positive, got {}", self.temperature)));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!("learning_rate must be >= 0, got {}", self.learning_rate)));
        }
        Ok(())
    }

    pub fn n_candidates(&self) -> usize {
        self.n_distractors + 1
    }
}

/// Attribute values, each in `0..n_values`.
pub type Observation = Vec<u32>;

pub fn sample_observation<R: Rng + ?Sized>(cfg: &GameConfig, rng: &mut R) -> Observation {
    (0..cfg.n_attributes).map(|_| rng.gen_range(0..cfg.n_values as u32)).collect()
}

/// A fresh dataset of [`DATASET_SIZE`] uniform observations.
pub fn sample_dataset<R: Rng + ?Sized>(cfg: &GameConfig, rng: &mut R) -> Vec<Observation> {
    (0..DATASET_SIZE).map(|_| sample_observation(cfg, rng)).collect()
}

/// Observations as raw integer values cast to reals, one per row.
pub fn observation_tensor(obs: &[Observation]) -> Result<Tensor> {
    let cols = obs.first().map_or(0, Vec::len);
    if obs.is_empty() || cols == 0 || obs.iter().any(|o| o.len() != cols) {
        return Err(Error::Shape {
            op: "observation_tensor",
            detail: format!("{} ragged or empty observations", obs.len()),
        });
    }
    Tensor::matrix(obs.len(), cols, obs.iter().flatten().map(|&v| v as f32).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SenderMode {
    /// Relaxed one-hot tokens through Gumbel-Softmax; `zero_noise` replaces
    /// the Gumbel samples with zeros.
    Train { zero_noise: bool },
    /// Hard argmax tokens, no noise.
    Eval,
}

pub struct SenderOutput {
    /// One `batch x vocab` (relaxed or hard) one-hot matrix per position.
    pub one_hots: Vec<Var>,
    /// `tokens[b]` is the message for row `b` (argmax of each position).
    pub tokens: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sender {
    pub encoder: Mlp,
    pub rnn: Rnn,
    pub embed: Embedding,
    pub out: Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Receiver {
    pub embed: Embedding,
    pub rnn: Rnn,
    pub encoder: Mlp,
}

/// Sender and receiver parameters for one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Agents {
    pub cfg: GameConfig,
    pub store: ParamStore,
    pub sender: Sender,
    pub receiver: Receiver,
}

impl Agents {
    pub fn new(cfg: &GameConfig) -> Result<Self> {
        cfg.validate()?;
        let mut store = ParamStore::new();
        let rng = &mut substream(cfg.seed, 0);
        let (a, e, h, v) = (cfg.n_attributes, cfg.embed_size, cfg.hidden_size, cfg.vocab_size);
        let sender = Sender {
            encoder: Mlp::new(&mut store, "sender.encoder", a, h, cfg.fc_layers, rng),
            rnn: Rnn::new(&mut store, "sender.rnn", cfg.cell, cfg.rnn_layers, e, h, rng)?,
            embed: Embedding::new(&mut store, "sender.embed", v, e, rng),
            out: Linear::new(&mut store, "sender.out", h, v, rng),
        };
        let receiver = Receiver {
            embed: Embedding::new(&mut store, "receiver.embed", v, e, rng),
            rnn: Rnn::new(&mut store, "receiver.rnn", cfg.cell, cfg.rnn_layers, e, h, rng)?,
            encoder: Mlp::new(&mut store, "receiver.encoder", a, h, cfg.fc_layers, rng),
        };
        Ok(Self { cfg: cfg.clone(), store, sender, receiver })
    }

    /// Rebuilds agents around previously trained parameters.
    pub fn with_params(cfg: &GameConfig, store: ParamStore) -> Result<Self> {
        let mut agents = Self::new(cfg)?;
        if store.len() != agents.store.len() {
            return Err(Error::Shape {
                op: "Agents::with_params",
                detail: format!("{} tensors for {} parameters", store.len(), agents.store.len()),
            });
        }
        for id in agents.store.ids().collect::<Vec<_>>() {
            agents.store.set(id, store.get(id).clone())?;
        }
        Ok(agents)
    }
}

impl Sender {
    /// Generates messages for the observation rows of `obs`.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        g: &mut Graph<'_>,
        cfg: &GameConfig,
        obs: Var,
        mode: SenderMode,
        rng: &mut R,
    ) -> Result<SenderOutput> {
        let batch = g.value(obs).rows();
        let h0 = self.encoder.forward(g, obs)?;
        let mut state = self.rnn.state_from_var(g, h0)?;
        let mut input = g.constant(Tensor::zeros(&[batch, cfg.embed_size]))?;
        let mut one_hots = Vec::with_capacity(cfg.message_length);
        let mut tokens = vec![Vec::with_capacity(cfg.message_length); batch];
        for _ in 0..cfg.message_length {
            let (h, next) = self.rnn.step(g, input, &state)?;
            state = next;
            let logits = self.out.forward(g, h)?;
            let (one_hot, ids) = match mode {
                SenderMode::Train { zero_noise } => {
                    let noise = if zero_noise {
                        Tensor::zeros(&[batch, cfg.vocab_size])
                    } else {
                        sample_gumbel(&[batch, cfg.vocab_size], rng)
                    };
                    let y = g.gumbel_softmax(logits, &noise, cfg.temperature)?;
                    let ids = g.value(y).argmax_rows();
                    (y, ids)
                }
                SenderMode::Eval => {
                    let ids = g.value(logits).argmax_rows();
                    let mut hard = Tensor::zeros(&[batch, cfg.vocab_size]);
                    for (b, &t) in ids.iter().enumerate() {
                        hard.data_mut()[b * cfg.vocab_size + t] = 1.0;
                    }
                    (g.constant(hard)?, ids)
                }
            };
            for (msg, &t) in tokens.iter_mut().zip(&ids) {
                msg.push(t);
            }
            input = self.embed.mix(g, one_hot)?;
            one_hots.push(one_hot);
        }
        Ok(SenderOutput { one_hots, tokens })
    }
}

impl Receiver {
    /// Final top-layer hidden state after reading the message.
    pub fn encode_message(&self, g: &mut Graph<'_>, one_hots: &[Var]) -> Result<Var> {
        let batch = g.value(one_hots[0]).rows();
        let stacked = g.concat_rows(one_hots)?;
        let x = self.embed.mix(g, stacked)?;
        let state = self.rnn.zero_state(g, batch)?;
        let (_, last) = self.rnn.run_sequence(g, x, batch, &state)?;
        Ok(*last.h.last().expect("rnn has at least one layer"))
    }

    /// `batch x group` dot-product scores between each message encoding and
    /// its `group` candidate encodings (candidate rows grouped per message).
    pub fn scores(&self, g: &mut Graph<'_>, message: Var, candidates: Var, group: usize) -> Result<Var> {
        if group == 0 || g.value(candidates).rows() == 0 {
            return Err(Error::Empty("candidates"));
        }
        let c = self.encoder.forward(g, candidates)?;
        g.group_dot(message, c, group)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedGame {
    pub agents: Agents,
    pub metrics: Vec<EpochMetrics>,
}

impl TrainedGame {
    pub fn config(&self) -> &GameConfig {
        &self.agents.cfg
    }

    pub fn final_accuracy(&self) -> Option<f64> {
        self.metrics.last().map(|m| m.accuracy)
    }
}

/// One training round set: per row, the correct observation placed at a
/// random position among fresh uniform distractors.
struct Rounds {
    targets: Vec<usize>,
    candidates: Vec<Observation>,
}

fn build_rounds<R: Rng + ?Sized>(cfg: &GameConfig, correct: &[Observation], pool: usize, rng: &mut R) -> Rounds {
    let mut targets = Vec::with_capacity(correct.len());
    let mut candidates = Vec::with_capacity(correct.len() * pool);
    for obs in correct {
        let pos = rng.gen_range(0..pool);
        for j in 0..pool {
            candidates.push(if j == pos { obs.clone() } else { sample_observation(cfg, rng) });
        }
        targets.push(pos);
    }
    Rounds { targets, candidates }
}

/// 1-based rank of `scores[target]` with ties broken uniformly at random.
fn rank_of<R: Rng + ?Sized>(scores: &[f32], target: usize, rng: &mut R) -> usize {
    let s = scores[target];
    let above = scores.iter().filter(|&&v| v > s).count();
    let tied = scores.iter().filter(|&&v| v == s).count() - 1;
    1 + above + if tied > 0 { rng.gen_range(0..=tied) } else { 0 }
}

/// Trains sender and receiver for `cfg.n_epochs` epochs, each over a fresh
/// dataset split into minibatches. A non-finite loss aborts with
/// [`Error::NonFinite`].
pub fn train(cfg: &GameConfig) -> Result<TrainedGame> {
    train_with(cfg, |_| {})
}

/// [`train`] with a callback receiving each epoch's metrics.
pub fn train_with(cfg: &GameConfig, mut on_epoch: impl FnMut(&EpochMetrics)) -> Result<TrainedGame> {
    let _ftz = FlushSubnormals::enable();
    let mut agents = Agents::new(cfg)?;
    let mut adam = AdamState::new(&agents.store);
    let rng = &mut substream(cfg.seed, 1);
    let steps_per_epoch = DATASET_SIZE.div_ceil(cfg.batch_size);
    let schedule = LrSchedule::new(cfg.learning_rate, cfg.cosine_annealing, (cfg.n_epochs * steps_per_epoch) as u64);
    let k = cfg.n_candidates();
    let mut metrics = Vec::with_capacity(cfg.n_epochs);
    let mut step = 0u64;
    for epoch in 0..cfg.n_epochs {
        let data = sample_dataset(cfg, rng);
        let (mut loss_sum, mut correct) = (0.0f64, 0usize);
        for batch in data.chunks(cfg.batch_size) {
            let rounds = build_rounds(cfg, batch, k, rng);
            let (loss, grads, scores) = {
                let mut g = Graph::new(&agents.store);
                let obs = g.constant(observation_tensor(batch)?)?;
                let msg = agents.sender.forward(&mut g, cfg, obs, SenderMode::Train { zero_noise: false }, rng)?;
                let enc = agents.receiver.encode_message(&mut g, &msg.one_hots)?;
                let cands = g.constant(observation_tensor(&rounds.candidates)?)?;
                let scores = agents.receiver.scores(&mut g, enc, cands, k)?;
                let loss = g.cross_entropy(scores, &rounds.targets)?;
                let grads = g.backward(loss)?;
                (g.value(loss).item()?, grads, g.value(scores).clone())
            };
            adam.step(&mut agents.store, &grads, schedule.lr(step))?;
            step += 1;
            loss_sum += f64::from(loss) * batch.len() as f64;
            for (row, &t) in scores.data().chunks_exact(k).zip(&rounds.targets) {
                if rank_of(row, t, rng) == 1 {
                    correct += 1;
                }
            }
        }
        let m = EpochMetrics {
            epoch,
            loss: loss_sum / DATASET_SIZE as f64,
            accuracy: correct as f64 / DATASET_SIZE as f64,
        };
        on_epoch(&m);
        metrics.push(m);
    }
    Ok(TrainedGame { agents, metrics })
}

/// Eval-mode messages for a batch of observations.
pub fn messages(agents: &Agents, obs: &[Observation]) -> Result<Vec<Vec<usize>>> {
    let mut g = Graph::new(&agents.store);
    let x = g.constant(observation_tensor(obs)?)?;
    // Eval mode draws no randomness; any generator will do.
    let out = agents.sender.forward(&mut g, &agents.cfg, x, SenderMode::Eval, &mut rng::seeded(0))?;
    Ok(out.tokens)
}

/// Fraction of `n_rounds` rounds where the correct observation ranks within
/// the top `max(1, ⌈pool_size/100⌉)` of a pool holding it and
/// `pool_size - 1` fresh distractors.
pub fn eval_accuracy<R: Rng + ?Sized>(agents: &Agents, n_rounds: usize, pool_size: usize, rng: &mut R) -> Result<f64> {
    if pool_size == 0 {
        return Err(Error::InvalidConfig("pool_size must be at least 1".into()));
    }
    if n_rounds == 0 {
        return Ok(0.0);
    }
    let cutoff = pool_size.div_ceil(100).max(1);
    let cfg = &agents.cfg;
    let chunk = (4096 / pool_size).clamp(1, 64);
    let mut hits = 0usize;
    let mut done = 0;
    while done < n_rounds {
        let n = chunk.min(n_rounds - done);
        let correct: Vec<Observation> = (0..n).map(|_| sample_observation(cfg, rng)).collect();
        let rounds = build_rounds(cfg, &correct, pool_size, rng);
        let mut g = Graph::new(&agents.store);
        let obs = g.constant(observation_tensor(&correct)?)?;
        let msg = agents.sender.forward(&mut g, cfg, obs, SenderMode::Eval, rng)?;
        let enc = agents.receiver.encode_message(&mut g, &msg.one_hots)?;
        let cands = g.constant(observation_tensor(&rounds.candidates)?)?;
        let scores = agents.receiver.scores(&mut g, enc, cands, pool_size)?;
        for (row, &t) in g.value(scores).data().chunks_exact(pool_size).zip(&rounds.targets) {
            if rank_of(row, t, rng) <= cutoff {
                hits += 1;
            }
        }
        done += n;
    }
    Ok(hits as f64 / n_rounds as f64)
}

/// Eval-mode messages for fresh observations, one utterance each, until at
/// least `n_tokens` tokens have been written.
pub fn emit_corpus<R: Rng + ?Sized>(agents: &Agents, n_tokens: usize, rng: &mut R) -> Result<Corpus> {
    let n_utts = n_tokens.div_ceil(agents.cfg.message_length);
    let mut utts = Vec::with_capacity(n_utts);
    while utts.len() < n_utts {
        let n = (n_utts - utts.len()).min(256);
        let obs: Vec<Observation> = (0..n).map(|_| sample_observation(&agents.cfg, rng)).collect();
        for m in messages(agents, &obs)? {
            utts.push(m.into_iter().map(|t| t as Token).collect());
        }
    }
    if utts.is_empty() {
        return Ok(Corpus::default());
    }
    Corpus::new(utts)?.with_vocab_bound(agents.cfg.vocab_size as u32)
}
