//! Token corpora and their unigram statistics.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Token = u32;

/// A sequence of utterances of integer tokens.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    utterances: Vec<Vec<Token>>,
    vocab_bound: Option<u32>,
}

impl Corpus {
    /// Builds a corpus; every utterance must be non-empty.
    pub fn new(utterances: Vec<Vec<Token>>) -> Result<Self> {
        if let Some(i) = utterances.iter().position(Vec::is_empty) {
            return Err(Error::InvalidConfig(format!("utterance {i} is empty")));
        }
        Ok(Self { utterances, vocab_bound: None })
    }

    /// Attaches an exclusive upper bound on token ids.
    pub fn with_vocab_bound(mut self, bound: u32) -> Result<Self> {
        if let Some(t) = self.tokens().find(|&t| t >= bound) {
            return Err(Error::InvalidConfig(format!("token {t} is outside the vocabulary bound {bound}")));
        }
        self.vocab_bound = Some(bound);
        Ok(self)
    }

    pub fn vocab_bound(&self) -> Option<u32> {
        self.vocab_bound
    }

    pub fn utterances(&self) -> &[Vec<Token>] {
        &self.utterances
    }

    pub fn into_utterances(self) -> Vec<Vec<Token>> {
        self.utterances
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    pub fn n_tokens(&self) -> usize {
        self.utterances.iter().map(Vec::len).sum()
    }

    pub fn tokens(&self) -> impl Iterator<Item = Token> + '_ {
        self.utterances.iter().flatten().copied()
    }

    /// Applies `f` to every token id.
    pub fn relabel(&self, mut f: impl FnMut(Token) -> Token) -> Corpus {
        Corpus {
            utterances: self.utterances.iter().map(|u| u.iter().map(|&t| f(t)).collect()).collect(),
            vocab_bound: None,
        }
    }

    pub fn stats(&self) -> Result<UnigramStats> {
        UnigramStats::from_corpus(self)
    }
}

/// Unigram token counts and derived quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct UnigramStats {
    /// Count per token id, ascending by id.
    pub counts: BTreeMap<Token, u64>,
    pub total: u64,
    pub unique: usize,
    /// Shannon entropy of the empirical distribution, in bits.
    pub entropy: f64,
}

impl UnigramStats {
    pub fn from_corpus(corpus: &Corpus) -> Result<Self> {
        let mut counts = BTreeMap::new();
        let max = corpus.tokens().max().ok_or(Error::EmptyCorpus)?;
        if (max as usize) < (1 << 22) {
            let mut dense = alloc::vec![0u64; max as usize + 1];
            for t in corpus.tokens() {
                dense[t as usize] += 1;
            }
            counts.extend(dense.into_iter().enumerate().filter(|&(_, c)| c > 0).map(|(t, c)| (t as Token, c)));
        } else {
            for t in corpus.tokens() {
                *counts.entry(t).or_insert(0) += 1;
            }
        }
        let total: u64 = counts.values().sum();
        let unique = counts.len();
        let entropy = entropy_from_counts(counts.values().copied(), total);
        Ok(Self { counts, total, unique, entropy })
    }
}

/// `-Σ p log₂ p` over the given counts, clamped to `[0, log₂ unique]`.
pub fn entropy_from_counts(counts: impl Iterator<Item = u64>, total: u64) -> f64 {
    let n = total as f64;
    let mut h = 0.0;
    let mut unique = 0usize;
    for c in counts.filter(|&c| c > 0) {
        let p = c as f64 / n;
        h -= p * libm::log2(p);
        unique += 1;
    }
    h.clamp(0.0, libm::log2(unique.max(1) as f64))
}

/// Unigram token entropy in bits.
pub fn unigram_entropy(corpus: &Corpus) -> Result<f64> {
    Ok(UnigramStats::from_corpus(corpus)?.entropy)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankEntry {
    pub rank: usize,
    pub token: Token,
    pub count: u64,
}

/// Token counts sorted by decreasing frequency (ties by ascending id), with
/// 1-based ranks.
pub fn rank_frequency(corpus: &Corpus) -> Result<Vec<RankEntry>> {
    let stats = UnigramStats::from_corpus(corpus)?;
    let mut entries: Vec<(Token, u64)> = stats.counts.into_iter().collect();
    entries.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(entries.into_iter().enumerate().map(|(i, (token, count))| RankEntry { rank: i + 1, token, count }).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn corpus(tokens: &[Token]) -> Corpus {
        Corpus::new(vec![tokens.to_vec()]).unwrap()
    }

    #[test]
    fn entropy_of_constant_corpus_is_zero() {
        assert_eq!(unigram_entropy(&corpus(&[7; 100])).unwrap(), 0.0);
    }

    #[test]
    fn entropy_of_eight_equal_types_is_three_bits() {
        let toks: Vec<Token> = (0..8).cycle().take(64).collect();
        assert_eq!(unigram_entropy(&corpus(&toks)).unwrap(), 3.0);
    }

    #[test]
    fn entropy_of_aab() {
        // -(2/3)log₂(2/3) - (1/3)log₂(1/3) = 0.918295...
        let h = unigram_entropy(&corpus(&[0, 0, 1])).unwrap();
        assert!((h - 0.9183).abs() < 1e-4);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert_eq!(unigram_entropy(&Corpus::default()), Err(Error::EmptyCorpus));
        assert_eq!(rank_frequency(&Corpus::default()), Err(Error::EmptyCorpus));
    }

    #[test]
    fn empty_utterances_are_rejected() {
        assert!(Corpus::new(vec![vec![1], vec![]]).is_err());
    }

    #[test]
    fn vocab_bound_is_enforced() {
        assert!(corpus(&[1, 2, 3]).with_vocab_bound(3).is_err());
        assert_eq!(corpus(&[1, 2, 3]).with_vocab_bound(4).unwrap().vocab_bound(), Some(4));
    }

    #[test]
    fn rank_frequency_examples() {
        let rf = rank_frequency(&corpus(&[0, 0, 0, 1, 2])).unwrap();
        let pairs: Vec<_> = rf.iter().map(|e| (e.rank, e.count)).collect();
        assert_eq!(pairs, vec![(1, 3), (2, 1), (3, 1)]);
        assert_eq!((rf[1].token, rf[2].token), (1, 2));

        let rf = rank_frequency(&corpus(&[5; 9])).unwrap();
        assert_eq!(rf.iter().map(|e| (e.rank, e.count)).collect::<Vec<_>>(), vec![(1, 9)]);

        let rf = rank_frequency(&corpus(&[3, 1, 2, 0, 0, 1, 2, 3])).unwrap();
        assert_eq!(rf.len(), 4);
        assert!(rf.iter().all(|e| e.count == 2));
        assert_eq!(rf.iter().map(|e| e.token).collect::<Vec<_>>(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn sparse_ids_use_map_counting() {
        let c = corpus(&[u32::MAX, 0, u32::MAX]);
        let s = c.stats().unwrap();
        assert_eq!(s.counts.get(&u32::MAX), Some(&2));
        assert_eq!(s.unique, 2);
    }

    fn arb_corpus() -> impl Strategy<Value = Corpus> {
        prop::collection::vec(prop::collection::vec(0u32..40, 1..12), 1..20).prop_map(|u| Corpus::new(u).unwrap())
    }

    proptest! {
        #[test]
        fn entropy_is_bounded_by_log_unique(c in arb_corpus()) {
            let s = c.stats().unwrap();
            prop_assert!(s.entropy >= 0.0);
            prop_assert!(s.entropy <= libm::log2(s.unique as f64));
        }

        #[test]
        fn entropy_is_invariant_under_relabeling(c in arb_corpus(), shift in 1u32..1000) {
            // t -> 39 - t + shift·40 is a bijection on the ids in use.
            let relabeled = c.relabel(|t| 39 - t + shift * 40);
            let (a, b) = (unigram_entropy(&c).unwrap(), unigram_entropy(&relabeled).unwrap());
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn rank_frequencies_sum_to_total(c in arb_corpus()) {
            let rf = rank_frequency(&c).unwrap();
            prop_assert_eq!(rf.iter().map(|e| e.count).sum::<u64>(), c.n_tokens() as u64);
            prop_assert!(rf.windows(2).all(|w| w[0].count >= w[1].count));
            prop_assert!(rf.iter().enumerate().all(|(i, e)| e.rank == i + 1));
        }
    }
}
