//! Scalar objectives scored on emergent corpora: a small-scale transfer
//! benchmark (pretrain, re-embed, finetune, held-out cross-entropy) and the
//! negated unigram entropy, plus the entropy pruning gate.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::corpus::{unigram_entropy, Corpus};
use crate::error::{Error, Result};
use crate::lm::{CausalLm, LmSpec, Vocab};
use crate::rng::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    #[default]
    XferMini,
    Entropy,
}

impl ObjectiveKind {
    pub fn name(self) -> &'static str {
        match self {
            ObjectiveKind::XferMini => "xfer_mini",
            ObjectiveKind::Entropy => "entropy",
        }
    }
}

impl core::str::FromStr for ObjectiveKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "xfer_mini" => Ok(ObjectiveKind::XferMini),
            "entropy" => Ok(ObjectiveKind::Entropy),
            _ => Err(Error::InvalidConfig(format!("unknown objective {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialStatus {
    #[default]
    Ok,
    Pruned,
    Failed,
}

/// Budgets and model for the transfer objective. Budgets count stream
/// positions: tokens plus one separator per utterance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct XferConfig {
    pub pretrain_tokens: usize,
    pub pretrain_epochs: usize,
    pub finetune_tokens: usize,
    pub finetune_epochs: usize,
    pub test_tokens: usize,
    pub lm: LmSpec,
    pub seed: u64,
}

impl Default for XferConfig {
    fn default() -> Self {
        Self {
            pretrain_tokens: 2_000_000,
            pretrain_epochs: 1,
            finetune_tokens: 200_000,
            finetune_epochs: 2,
            test_tokens: 50_000,
            lm: LmSpec::default(),
            seed: 0,
        }
    }
}

impl XferConfig {
    pub fn validate(&self) -> Result<()> {
        self.lm.validate()?;
        if self.finetune_tokens < 2 || self.test_tokens < 2 {
            return Err(Error::InvalidConfig("finetune and test budgets need at least 2 positions".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveScore {
    /// Lower is better; `None` only for failed evaluations.
    pub value: Option<f64>,
    /// Test cross-entropy (nats per position) for each target.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub per_target: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entropy_bits: Option<f64>,
    pub status: TrialStatus,
}

impl ObjectiveScore {
    pub fn failed() -> Self {
        Self { value: None, per_target: Vec::new(), entropy_bits: None, status: TrialStatus::Failed }
    }
}

/// Pretrains on `source`, then for every target re-initialises the lexical
/// layers, finetunes and measures held-out cross-entropy. The score is the
/// mean over targets. Divergence yields a failed score rather than an error.
pub fn xferbench_mini(source: &Corpus, targets: &[Corpus], cfg: &XferConfig) -> Result<ObjectiveScore> {
    cfg.validate()?;
    if source.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if targets.is_empty() {
        return Err(Error::InvalidConfig("the transfer objective needs at least one target".into()));
    }
    let splits = targets.iter().map(|t| split_target(t, cfg)).collect::<Result<Vec<_>>>()?;
    match run_transfer(source, &splits, cfg) {
        Ok(per_target) => {
            let value = per_target.iter().sum::<f64>() / per_target.len() as f64;
            if !value.is_finite() {
                return Ok(ObjectiveScore::failed());
            }
            Ok(ObjectiveScore { value: Some(value), per_target, entropy_bits: None, status: TrialStatus::Ok })
        }
        Err(Error::NonFinite(_)) => Ok(ObjectiveScore::failed()),
        Err(e) => Err(e),
    }
}

struct TargetSplit {
    vocab: usize,
    train: Vec<usize>,
    test: Vec<usize>,
}

/// First `finetune_tokens` positions train, last `test_tokens` positions test.
fn split_target(target: &Corpus, cfg: &XferConfig) -> Result<TargetSplit> {
    let vocab = Vocab::canonical(target, cfg.lm.vocab_cap)?;
    let stream = vocab.encode(target, usize::MAX);
    let need = cfg.finetune_tokens + cfg.test_tokens;
    if stream.len() < need {
        return Err(Error::InsufficientData(format!(
            "target has {} positions, finetune + test budgets need {need}",
            stream.len()
        )));
    }
    Ok(TargetSplit {
        vocab: vocab.size(),
        train: stream[..cfg.finetune_tokens].to_vec(),
        test: stream[stream.len() - cfg.test_tokens..].to_vec(),
    })
}

fn run_transfer(source: &Corpus, targets: &[TargetSplit], cfg: &XferConfig) -> Result<Vec<f64>> {
    let src_vocab = Vocab::canonical_prefix(source, cfg.lm.vocab_cap, cfg.pretrain_tokens)?;
    let stream = src_vocab.encode(source, cfg.pretrain_tokens);
    let mut lm = CausalLm::new(&cfg.lm, src_vocab.size(), derive_seed(cfg.seed, 0), derive_seed(cfg.seed, 1))?;
    lm.train(&stream, cfg.pretrain_epochs)?;
    let mut out = Vec::with_capacity(targets.len());
    for (i, t) in targets.iter().enumerate() {
        let mut ft = lm.with_fresh_lexicon(t.vocab, derive_seed(cfg.seed, 100 + i as u64))?;
        ft.train(&t.train, cfg.finetune_epochs)?;
        out.push(ft.cross_entropy(&t.test)?);
    }
    Ok(out)
}

/// `-H(corpus)` in bits, so minimising maximises entropy.
pub fn entropy_objective(corpus: &Corpus) -> Result<ObjectiveScore> {
    let h = unigram_entropy(corpus)?;
    Ok(ObjectiveScore { value: Some(-h), per_target: Vec::new(), entropy_bits: Some(h), status: TrialStatus::Ok })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateDecision {
    Proceed,
    Pruned,
}

/// Prunes corpora whose unigram entropy falls below `threshold_bits`.
pub fn entropy_gate(corpus: &Corpus, threshold_bits: f64) -> Result<GateDecision> {
    if !(threshold_bits >= 0.0) {
        return Err(Error::InvalidConfig(format!("entropy threshold must be >= 0, got {threshold_bits}")));
    }
    Ok(gate_decision(unigram_entropy(corpus)?, threshold_bits))
}

pub fn gate_decision(entropy_bits: f64, threshold_bits: f64) -> GateDecision {
    if entropy_bits < threshold_bits {
        GateDecision::Pruned
    } else {
        GateDecision::Proceed
    }
}

/// Score recorded for pruned and failed trials: one worse than the worst
/// completed value, or `1` when nothing has completed yet.
pub fn penalty_value(completed: impl IntoIterator<Item = f64>) -> f64 {
    completed.into_iter().fold(None, |w: Option<f64>, v| Some(w.map_or(v, |w| w.max(v)))).unwrap_or(0.0) + 1.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn tiny_cfg() -> XferConfig {
        XferConfig {
            pretrain_tokens: 300,
            finetune_tokens: 200,
            finetune_epochs: 1,
            test_tokens: 100,
            lm: LmSpec { embed_dim: 6, hidden_dim: 8, layers: 1, batch_size: 4, bptt: 8, ..LmSpec::default() },
            ..XferConfig::default()
        }
    }

    fn cyclic(n: usize, period: u32, offset: u32) -> Corpus {
        let utts = (0..n).map(|i| (0..period).map(|j| offset + (j + i as u32) % period).collect()).collect();
        Corpus::new(utts).unwrap()
    }

    #[test]
    fn entropy_objective_values() {
        assert_eq!(entropy_objective(&Corpus::new(vec![vec![4; 10]]).unwrap()).unwrap().value, Some(0.0));
        let uniform = Corpus::new(vec![(0..8).collect()]).unwrap();
        assert_eq!(entropy_objective(&uniform).unwrap().value, Some(-3.0));
        assert!(entropy_objective(&Corpus::default()).is_err());
    }

    #[test]
    fn gate_examples() {
        assert_eq!(gate_decision(2.0, 4.0), GateDecision::Pruned);
        assert_eq!(gate_decision(0.0, 0.0), GateDecision::Proceed);
        let c = Corpus::new(vec![vec![1, 1, 1]]).unwrap();
        assert_eq!(entropy_gate(&c, 0.0).unwrap(), GateDecision::Proceed);
        assert!(entropy_gate(&c, -1.0).is_err());
    }

    #[test]
    fn penalty_is_worst_plus_one() {
        assert_eq!(penalty_value([3.0, 5.5, 4.0]), 6.5);
        assert_eq!(penalty_value([-3.0, -2.0]), -1.0);
        assert_eq!(penalty_value([]), 1.0);
    }

    #[test]
    fn xfer_is_deterministic_and_averages_targets() {
        let src = cyclic(60, 5, 10);
        let targets = [cyclic(80, 4, 0), cyclic(80, 6, 3)];
        let cfg = tiny_cfg();
        let a = xferbench_mini(&src, &targets, &cfg).unwrap();
        let b = xferbench_mini(&src, &targets, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.status, TrialStatus::Ok);
        assert_eq!(a.per_target.len(), 2);
        assert_eq!(a.value, Some((a.per_target[0] + a.per_target[1]) / 2.0));
        assert!(a.value.unwrap() > 0.0);
    }

    #[test]
    fn xfer_is_invariant_under_source_relabeling() {
        let src = cyclic(60, 5, 10);
        let relabeled = src.relabel(|t| 1000 - t);
        let targets = [cyclic(80, 4, 0)];
        let cfg = tiny_cfg();
        assert_eq!(xferbench_mini(&src, &targets, &cfg).unwrap(), xferbench_mini(&relabeled, &targets, &cfg).unwrap());
    }

    #[test]
    fn zero_pretrain_budget_makes_sources_irrelevant() {
        let cfg = XferConfig { pretrain_tokens: 0, ..tiny_cfg() };
        let targets = [cyclic(80, 4, 0)];
        let a = xferbench_mini(&cyclic(60, 5, 10), &targets, &cfg).unwrap();
        let b = xferbench_mini(&Corpus::new(vec![vec![7; 50]]).unwrap(), &targets, &cfg).unwrap();
        assert_eq!(a.value, b.value);
    }

    #[test]
    fn short_target_is_rejected() {
        let cfg = tiny_cfg();
        let err = xferbench_mini(&cyclic(10, 3, 0), &[cyclic(5, 3, 0)], &cfg).unwrap_err();
        assert!(matches!(err, Error::InsufficientData(_)));
        assert!(xferbench_mini(&cyclic(10, 3, 0), &[], &cfg).is_err());
    }
}
