//! Synthetic reference languages over a Zipf–Mandelbrot token distribution.
//!
//! Four generators of increasing formal complexity share one token
//! distribution: bag-of-words, a regular language `s₁⁺ s₂⁺ … s_k⁺` over a
//! random partition of the vocabulary, Dyck-n (nested delimiters where the
//! opening and closing token are the same id) and Shuffle Dyck-n. Content
//! tokens are `0..vocab_size`; every sentence is wrapped in `BoS = vocab_size`
//! and `EoS = vocab_size + 1`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Token};
use crate::error::{Error, Result};
use crate::rng;

/// Upper bound on content tokens in a Dyck or Shuffle Dyck sentence; once
/// reached, only closing moves are taken.
pub const DYCK_LENGTH_CAP: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LanguageKind {
    BagOfWords,
    Regular,
    Dyck,
    ShuffleDyck,
}

impl LanguageKind {
    pub const ALL: [LanguageKind; 4] =
        [LanguageKind::BagOfWords, LanguageKind::Regular, LanguageKind::Dyck, LanguageKind::ShuffleDyck];

    pub fn name(self) -> &'static str {
        match self {
            LanguageKind::BagOfWords => "bag_of_words",
            LanguageKind::Regular => "regular",
            LanguageKind::Dyck => "dyck",
            LanguageKind::ShuffleDyck => "shuffle_dyck",
        }
    }
}

impl core::str::FromStr for LanguageKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "bag_of_words" | "unigram" | "bow" => Ok(LanguageKind::BagOfWords),
            "regular" | "concat" => Ok(LanguageKind::Regular),
            "dyck" => Ok(LanguageKind::Dyck),
            "shuffle_dyck" => Ok(LanguageKind::ShuffleDyck),
            other => Err(Error::InvalidConfig(format!("unknown language kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub lang: LanguageKind,
    /// Target number of content tokens in the whole corpus.
    pub n_tokens: u64,
    pub vocab_size: u32,
    pub alpha: f64,
    pub beta: f64,
    pub stop_prob: f64,
    pub n_classes: u32,
    /// Probability of advancing to the next class after each token.
    pub repeat_prob: f64,
    pub open_prob: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            lang: LanguageKind::BagOfWords,
            n_tokens: 15_000_000,
            vocab_size: 30_000,
            alpha: 1.0,
            beta: 2.7,
            stop_prob: 0.1,
            n_classes: 10,
            repeat_prob: 0.4,
            open_prob: 0.5,
            seed: 0,
        }
    }
}

fn open_unit(name: &str, p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("{name} must lie in (0, 1), got {p}")))
    }
}

impl SynthConfig {
    pub fn new(lang: LanguageKind) -> Self {
        Self { lang, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        check_zm(self.vocab_size as usize, self.alpha, self.beta)?;
        if self.vocab_size > u32::MAX - 2 {
            return Err(Error::InvalidConfig("vocab_size leaves no room for BoS/EoS".into()));
        }
        match self.lang {
            LanguageKind::BagOfWords => open_unit("stop_prob", self.stop_prob),
            LanguageKind::Regular => {
                open_unit("repeat_prob", self.repeat_prob)?;
                if self.n_classes < 2 || self.vocab_size < self.n_classes {
                    return Err(Error::InvalidConfig(format!(
                        "regular language needs vocab_size >= n_classes >= 2, got vocab {} classes {}",
                        self.vocab_size, self.n_classes
                    )));
                }
                Ok(())
            }
            LanguageKind::Dyck => open_unit("open_prob", self.open_prob),
            LanguageKind::ShuffleDyck => {
                open_unit("open_prob", self.open_prob)?;
                if self.open_prob >= 0.6 {
                    return Err(Error::InvalidConfig(format!(
                        "shuffle_dyck requires open_prob < 0.6, got {}",
                        self.open_prob
                    )));
                }
                Ok(())
            }
        }
    }

    pub fn bos(&self) -> Token {
        self.vocab_size
    }

    pub fn eos(&self) -> Token {
        self.vocab_size + 1
    }
}

fn check_zm(vocab_size: usize, alpha: f64, beta: f64) -> Result<()> {
    if vocab_size == 0 {
        return Err(Error::InvalidConfig("vocab_size must be at least 1".into()));
    }
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidConfig(format!("alpha must be non-negative, got {alpha}")));
    }
    if !(beta > -1.0) || !beta.is_finite() {
        return Err(Error::InvalidConfig(format!("beta must exceed -1, got {beta}")));
    }
    Ok(())
}

/// Normalised weights `p_i ∝ 1 / (i + β)^α` for 1-based ranks `i`.
pub fn zm_weights(vocab_size: usize, alpha: f64, beta: f64) -> Result<Vec<f64>> {
    check_zm(vocab_size, alpha, beta)?;
    let raw: Vec<f64> = (1..=vocab_size).map(|i| libm::pow(i as f64 + beta, -alpha)).collect();
    // Sum smallest-first to keep the normalisation error at the 1e-16 level.
    let total: f64 = raw.iter().rev().sum();
    Ok(raw.into_iter().map(|w| w / total).collect())
}

/// Sampler over content tokens `0..vocab_size` (token `i - 1` has rank `i`).
#[derive(Debug, Clone)]
pub struct ZipfMandelbrot {
    weights: Vec<f64>,
    index: WeightedIndex<f64>,
}

impl ZipfMandelbrot {
    pub fn new(vocab_size: usize, alpha: f64, beta: f64) -> Result<Self> {
        let weights = zm_weights(vocab_size, alpha, beta)?;
        let index = WeightedIndex::new(&weights).map_err(|e| Error::InvalidConfig(format!("{e}")))?;
        Ok(Self { weights, index })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Token {
        self.index.sample(rng) as Token
    }
}

/// Random partition of the vocabulary into `k` non-empty classes, each with
/// its own renormalised Zipf–Mandelbrot sampler.
#[derive(Debug, Clone)]
pub struct RegularClasses {
    class_of: Vec<u32>,
    members: Vec<Vec<Token>>,
    samplers: Vec<WeightedIndex<f64>>,
}

impl RegularClasses {
    const MAX_RESAMPLES: usize = 10_000;

    pub fn new<R: Rng + ?Sized>(weights: &[f64], k: usize, rng: &mut R) -> Result<Self> {
        let v = weights.len();
        if k < 2 || v < k {
            return Err(Error::InvalidConfig(format!("cannot partition {v} tokens into {k} classes")));
        }
        let mut class_of = vec![0u32; v];
        let mut ok = false;
        for _ in 0..Self::MAX_RESAMPLES {
            let mut seen = vec![false; k];
            for c in class_of.iter_mut() {
                *c = rng.gen_range(0..k as u32);
                seen[*c as usize] = true;
            }
            if seen.iter().all(|&s| s) {
                ok = true;
                break;
            }
        }
        if !ok {
            // Uniform assignment almost never covers every class when v is
            // close to k; seed one token per class and assign the rest.
            let mut order: Vec<usize> = (0..v).collect();
            rand::seq::SliceRandom::shuffle(order.as_mut_slice(), rng);
            for (j, &t) in order.iter().enumerate() {
                class_of[t] = if j < k { j as u32 } else { rng.gen_range(0..k as u32) };
            }
        }
        let mut members = vec![Vec::new(); k];
        for (t, &c) in class_of.iter().enumerate() {
            members[c as usize].push(t as Token);
        }
        let samplers = members
            .iter()
            .map(|m| {
                WeightedIndex::new(m.iter().map(|&t| weights[t as usize]))
                    .map_err(|e| Error::InvalidConfig(format!("{e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { class_of, members, samplers })
    }

    pub fn n_classes(&self) -> usize {
        self.members.len()
    }

    pub fn class_of(&self, token: Token) -> Option<usize> {
        self.class_of.get(token as usize).map(|&c| c as usize)
    }

    pub fn members(&self, class: usize) -> &[Token] {
        &self.members[class]
    }

    fn sample<R: Rng + ?Sized>(&self, class: usize, rng: &mut R) -> Token {
        self.members[class][self.samplers[class].sample(rng)]
    }
}

/// A configured generator producing one sentence of content tokens at a time.
#[derive(Debug, Clone)]
pub struct Generator {
    cfg: SynthConfig,
    zm: ZipfMandelbrot,
    classes: Option<RegularClasses>,
}

impl Generator {
    /// Validates `cfg`; the regular language draws its class partition from `rng`.
    pub fn new<R: Rng + ?Sized>(cfg: &SynthConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let zm = ZipfMandelbrot::new(cfg.vocab_size as usize, cfg.alpha, cfg.beta)?;
        let classes = match cfg.lang {
            LanguageKind::Regular => Some(RegularClasses::new(zm.weights(), cfg.n_classes as usize, rng)?),
            _ => None,
        };
        Ok(Self { cfg: cfg.clone(), zm, classes })
    }

    pub fn config(&self) -> &SynthConfig {
        &self.cfg
    }

    pub fn classes(&self) -> Option<&RegularClasses> {
        self.classes.as_ref()
    }

    /// Content tokens of one sentence (no BoS/EoS).
    pub fn sentence<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Token> {
        match self.cfg.lang {
            LanguageKind::BagOfWords => self.bag_of_words_sentence(rng),
            LanguageKind::Regular => self.regular_sentence(rng),
            LanguageKind::Dyck => self.dyck_sentence(rng),
            LanguageKind::ShuffleDyck => {
                let s = self.dyck_sentence(rng);
                shuffle_interleave(&s, rng)
            }
        }
    }

    fn bag_of_words_sentence<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Token> {
        let mut out = Vec::new();
        loop {
            out.push(self.zm.sample(rng));
            if rng.gen_bool(self.cfg.stop_prob) {
                return out;
            }
        }
    }

    fn regular_sentence<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Token> {
        let classes = self.classes.as_ref().expect("regular generator has classes");
        let mut out = Vec::new();
        let mut class = 0;
        loop {
            out.push(classes.sample(class, rng));
            if rng.gen_bool(self.cfg.repeat_prob) {
                class += 1;
                if class == classes.n_classes() {
                    return out;
                }
            }
        }
    }

    fn dyck_sentence<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Token> {
        let mut out = Vec::new();
        let mut stack: Vec<Token> = Vec::new();
        let can_nest = self.cfg.vocab_size >= 2;
        loop {
            let must_close = !stack.is_empty()
                && (out.len() + stack.len() + 2 > DYCK_LENGTH_CAP || !can_nest || !rng.gen_bool(self.cfg.open_prob));
            if must_close {
                out.push(stack.pop().expect("non-empty stack"));
                if stack.is_empty() {
                    return out;
                }
            } else {
                let top = stack.last().copied();
                let mut t = self.zm.sample(rng);
                while Some(t) == top {
                    t = self.zm.sample(rng);
                }
                out.push(t);
                stack.push(t);
            }
        }
    }
}

/// Splits a sentence into per-token-type streams (in order) and re-interleaves
/// them by repeatedly appending the next token of a uniformly chosen
/// non-empty stream.
pub fn shuffle_interleave<R: Rng + ?Sized>(sentence: &[Token], rng: &mut R) -> Vec<Token> {
    let mut types: Vec<Token> = sentence.to_vec();
    types.sort_unstable();
    types.dedup();
    if types.len() <= 1 {
        return sentence.to_vec();
    }
    // Each stream of a single token type is just a count of remaining tokens.
    let mut remaining: Vec<(Token, usize)> =
        types.iter().map(|&t| (t, sentence.iter().filter(|&&s| s == t).count())).collect();
    let mut out = Vec::with_capacity(sentence.len());
    while !remaining.is_empty() {
        let i = rng.gen_range(0..remaining.len());
        out.push(remaining[i].0);
        remaining[i].1 -= 1;
        if remaining[i].1 == 0 {
            remaining.remove(i);
        }
    }
    out
}

fn wrap(cfg: &SynthConfig, content: Vec<Token>) -> Vec<Token> {
    let mut s = Vec::with_capacity(content.len() + 2);
    s.push(cfg.bos());
    s.extend(content);
    s.push(cfg.eos());
    s
}

fn generate_with<R: Rng + ?Sized>(cfg: &SynthConfig, rng: &mut R) -> Result<Corpus> {
    let generator = Generator::new(cfg, rng)?;
    let mut utterances = Vec::new();
    let mut content = 0u64;
    while content < cfg.n_tokens {
        let s = generator.sentence(rng);
        content += s.len() as u64;
        utterances.push(wrap(cfg, s));
    }
    Corpus::new(utterances)?.with_vocab_bound(cfg.vocab_size + 2)
}

fn expect_kind(cfg: &SynthConfig, kind: LanguageKind) -> Result<()> {
    if cfg.lang != kind {
        return Err(Error::InvalidConfig(format!("expected a {} config, got {}", kind.name(), cfg.lang.name())));
    }
    Ok(())
}

/// Bag-of-words: i.i.d. tokens, geometric sentence length with mean `1/stop_prob`.
pub fn gen_bag_of_words<R: Rng + ?Sized>(cfg: &SynthConfig, rng: &mut R) -> Result<Corpus> {
    expect_kind(cfg, LanguageKind::BagOfWords)?;
    generate_with(cfg, rng)
}

pub fn gen_regular<R: Rng + ?Sized>(cfg: &SynthConfig, rng: &mut R) -> Result<Corpus> {
    expect_kind(cfg, LanguageKind::Regular)?;
    generate_with(cfg, rng)
}

pub fn gen_dyck<R: Rng + ?Sized>(cfg: &SynthConfig, rng: &mut R) -> Result<Corpus> {
    expect_kind(cfg, LanguageKind::Dyck)?;
    generate_with(cfg, rng)
}

pub fn gen_shuffle_dyck<R: Rng + ?Sized>(cfg: &SynthConfig, rng: &mut R) -> Result<Corpus> {
    expect_kind(cfg, LanguageKind::ShuffleDyck)?;
    generate_with(cfg, rng)
}

/// Generates the corpus described by `cfg`, seeded by `cfg.seed`.
pub fn generate(cfg: &SynthConfig) -> Result<Corpus> {
    let mut r = rng::seeded(cfg.seed);
    generate_with(cfg, &mut r)
}

/// One-at-a-time variations around the defaults for each language.
pub fn sweep(lang: LanguageKind) -> Vec<SynthConfig> {
    let base = SynthConfig::new(lang);
    let mut out = vec![base.clone()];
    let alphas = [0.0, 0.25, 0.5, 2.0, 4.0];
    let n_tokens = [1_000, 10_000, 100_000, 1_000_000, 5_000_000];
    let mut vary = |f: &dyn Fn(&mut SynthConfig)| {
        let mut c = base.clone();
        f(&mut c);
        out.push(c);
    };
    match lang {
        LanguageKind::BagOfWords => {
            for v in [100, 1_000, 5_000, 10_000] {
                vary(&|c| c.vocab_size = v);
            }
            for p in [0.05, 0.2] {
                vary(&|c| c.stop_prob = p);
            }
        }
        LanguageKind::Regular => {
            for v in [100, 1_000, 5_000, 10_000] {
                vary(&|c| c.vocab_size = v);
            }
            for n in n_tokens {
                vary(&|c| c.n_tokens = n);
            }
            for k in [5, 20, 40] {
                vary(&|c| c.n_classes = k);
            }
            for p in [0.2, 0.5, 0.6] {
                vary(&|c| c.repeat_prob = p);
            }
        }
        LanguageKind::Dyck | LanguageKind::ShuffleDyck => {
            for v in [10, 100, 1_000, 5_000, 10_000] {
                vary(&|c| c.vocab_size = v);
            }
            for n in n_tokens {
                vary(&|c| c.n_tokens = n);
            }
            for p in [0.2, 0.3, 0.4, 0.6] {
                if lang == LanguageKind::ShuffleDyck && p >= 0.6 {
                    continue;
                }
                vary(&|c| c.open_prob = p);
            }
        }
    }
    for a in alphas {
        vary(&|c| c.alpha = a);
    }
    out
}
