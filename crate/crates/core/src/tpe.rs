//! Search spaces, trial records and the Tree-structured Parzen Estimator.
//!
//! Every dimension has an internal real coordinate: the natural log for
//! log-scale dims (before integer rounding), the choice index for
//! categoricals. Density estimates are built per dimension on those
//! coordinates and combined as a product.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::TrialStatus;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Int(i64),
    Float(f64),
    Str(String),
}

impl ParamValue {
    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            ParamValue::Int(i) => Some(i as f64),
            ParamValue::Float(f) => Some(f),
            ParamValue::Str(_) => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            ParamValue::Str(s) => Some(s),
            _ => None,
        }
    }
}

impl core::fmt::Display for ParamValue {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            ParamValue::Int(i) => write!(f, "{i}"),
            ParamValue::Float(x) => write!(f, "{x}"),
            ParamValue::Str(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dim {
    LogUniform(f64, f64),
    LogInt(i64, i64),
    Categorical(Vec<String>),
    Fixed(ParamValue),
}

impl Dim {
    fn validate(&self, name: &str) -> Result<()> {
        let bad = |why: &str| Err(Error::InvalidConfig(format!("dimension {name}: {why}")));
        match self {
            Dim::LogUniform(lo, hi) if !(*lo > 0.0 && lo < hi && hi.is_finite()) => bad("needs 0 < lo < hi"),
            Dim::LogInt(lo, hi) if !(*lo > 0 && lo < hi) => bad("needs 0 < lo < hi"),
            Dim::Categorical(c) if c.is_empty() => bad("needs at least one choice"),
            _ => Ok(()),
        }
    }

    /// Internal coordinate range, or `None` for fixed dims.
    fn internal_range(&self) -> Option<(f64, f64)> {
        match self {
            Dim::LogUniform(lo, hi) => Some((libm::log(*lo), libm::log(*hi))),
            Dim::LogInt(lo, hi) => Some((libm::log(*lo as f64), libm::log(*hi as f64))),
            Dim::Categorical(c) => Some((0.0, c.len() as f64)),
            Dim::Fixed(_) => None,
        }
    }

    /// Maps an internal coordinate to the user-facing value.
    fn value_at(&self, u: f64) -> ParamValue {
        match self {
            Dim::LogUniform(lo, hi) => ParamValue::Float(libm::exp(u).clamp(*lo, *hi)),
            Dim::LogInt(lo, hi) => {
                let r = round_half_even(libm::exp(u));
                ParamValue::Int((r as i64).clamp(*lo, *hi))
            }
            Dim::Categorical(c) => ParamValue::Str(c[(u as usize).min(c.len() - 1)].clone()),
            Dim::Fixed(v) => v.clone(),
        }
    }

    fn contains(&self, v: &ParamValue) -> bool {
        match (self, v) {
            (Dim::LogUniform(lo, hi), ParamValue::Float(x)) => lo <= x && x <= hi,
            (Dim::LogUniform(lo, hi), ParamValue::Int(x)) => *lo <= *x as f64 && *x as f64 <= *hi,
            (Dim::LogInt(lo, hi), ParamValue::Int(x)) => lo <= x && x <= hi,
            (Dim::Categorical(c), ParamValue::Str(s)) => c.contains(s),
            (Dim::Fixed(f), v) => f == v,
            _ => false,
        }
    }
}

pub fn round_half_even(x: f64) -> f64 {
    let r = libm::round(x);
    if (x - libm::trunc(x)).abs() == 0.5 && r % 2.0 != 0.0 {
        r - x.signum()
    } else {
        r
    }
}

/// Named dimensions; iteration (and therefore sampling) is in name order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamSpace {
    pub dims: BTreeMap<String, Dim>,
}

pub type Params = BTreeMap<String, ParamValue>;

impl ParamSpace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, dim: Dim) -> Self {
        self.dims.insert(name.into(), dim);
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.dims.iter().try_for_each(|(n, d)| d.validate(n))
    }

    /// Checks that `params` names exactly this space's dims, each in range.
    pub fn check(&self, params: &Params) -> Result<()> {
        if params.len() != self.dims.len() {
            return Err(Error::InvalidConfig(format!("{} params for {} dimensions", params.len(), self.dims.len())));
        }
        for (name, dim) in &self.dims {
            match params.get(name) {
                Some(v) if dim.contains(v) => {}
                Some(v) => return Err(Error::InvalidConfig(format!("{name} = {v} is outside {dim:?}"))),
                None => return Err(Error::InvalidConfig(format!("missing parameter {name}"))),
            }
        }
        Ok(())
    }

    fn build(&self, internal: BTreeMap<String, f64>) -> Suggestion {
        let params =
            self.dims.iter().map(|(n, d)| (n.clone(), d.value_at(internal.get(n).copied().unwrap_or(0.0)))).collect();
        Suggestion { params, internal }
    }
}

/// A proposed point: user-facing values and their internal coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Suggestion {
    pub params: Params,
    pub internal: BTreeMap<String, f64>,
}

/// Independent draws per dimension: uniform in log space for log dims,
/// uniform over choices for categoricals.
pub fn sample_random<R: Rng + ?Sized>(space: &ParamSpace, rng: &mut R) -> Suggestion {
    let mut internal = BTreeMap::new();
    for (name, dim) in &space.dims {
        match dim {
            Dim::Categorical(c) => {
                internal.insert(name.clone(), rng.gen_range(0..c.len()) as f64);
            }
            Dim::Fixed(_) => {}
            _ => {
                let (a, b) = dim.internal_range().unwrap_or((0.0, 0.0));
                internal.insert(name.clone(), a + rng.gen::<f64>() * (b - a));
            }
        }
    }
    space.build(internal)
}

/// Persisted outcome of one search trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub index: u64,
    pub params: Params,
    /// Internal coordinates the sampler drew; used to rebuild its state.
    pub internal: BTreeMap<String, f64>,
    /// Objective value; the penalty for pruned and failed trials.
    pub value: f64,
    pub status: TrialStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_clock_secs: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entropy_bits: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub per_target: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corpus_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TpeConfig {
    pub gamma: f64,
    pub n_startup_trials: usize,
    pub n_candidates: usize,
}

impl Default for TpeConfig {
    fn default() -> Self {
        Self { gamma: 0.25, n_startup_trials: 10, n_candidates: 24 }
    }
}

impl TpeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::InvalidConfig(format!("gamma must lie in (0, 1), got {}", self.gamma)));
        }
        if self.n_candidates == 0 {
            return Err(Error::InvalidConfig("n_candidates must be positive".into()));
        }
        Ok(())
    }
}

/// Indices into `history` of the `⌈γ·n⌉` lowest-valued ok trials (ties by
/// trial index) and of everything else. Pruned and failed trials are
/// always bad.
pub fn split_good_bad(history: &[TrialRecord], gamma: f64) -> Result<(Vec<usize>, Vec<usize>)> {
    if history.is_empty() {
        return Err(Error::Empty("history"));
    }
    let n_good = libm::ceil(gamma * history.len() as f64) as usize;
    let mut ok: Vec<usize> = (0..history.len()).filter(|&i| history[i].status == TrialStatus::Ok).collect();
    ok.sort_by(|&a, &b| history[a].value.total_cmp(&history[b].value).then(history[a].index.cmp(&history[b].index)));
    ok.truncate(n_good);
    let mut good = ok;
    good.sort_unstable();
    let bad = (0..history.len()).filter(|i| good.binary_search(i).is_err()).collect();
    Ok((good, bad))
}

/// Mean of Gaussian kernels with common `bandwidth` centred at `points`.
/// With no points, the uniform density on `range`.
pub fn kde_density(points: &[f64], query: f64, bandwidth: f64, range: (f64, f64)) -> f64 {
    if points.is_empty() {
        return uniform_density(query, range);
    }
    let norm = 1.0 / (bandwidth * libm::sqrt(2.0 * PI));
    let sum: f64 = points
        .iter()
        .map(|&p| {
            let z = (query - p) / bandwidth;
            libm::exp(-0.5 * z * z)
        })
        .sum();
    norm * sum / points.len() as f64
}

fn uniform_density(x: f64, (a, b): (f64, f64)) -> f64 {
    if x >= a && x <= b {
        1.0 / (b - a)
    } else {
        0.0
    }
}

/// Scott's rule `σ·n^(-1/5)`, clamped to `[width/20, width]`.
pub fn scott_bandwidth(points: &[f64], width: f64) -> f64 {
    let n = points.len() as f64;
    let sigma = if points.len() < 2 {
        0.0
    } else {
        let mean = points.iter().sum::<f64>() / n;
        libm::sqrt(points.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>() / (n - 1.0))
    };
    (sigma * libm::pow(n, -0.2)).clamp(width / 20.0, width)
}

/// Density estimate for one dimension from a set of observed coordinates.
///
/// Continuous dims mix the Gaussian KDE with the uniform prior on the range
/// (weight `1/(n+1)`); categoricals use Laplace-smoothed frequencies.
#[derive(Debug, Clone, PartialEq)]
pub enum DimEstimator {
    Continuous { points: Vec<f64>, bandwidth: f64, range: (f64, f64) },
    Categorical { probs: Vec<f64> },
}

impl DimEstimator {
    pub fn fit(dim: &Dim, points: &[f64]) -> Option<Self> {
        match dim {
            Dim::Fixed(_) => None,
            Dim::Categorical(c) => {
                let mut counts = alloc::vec![1.0; c.len()];
                for &p in points {
                    counts[(p as usize).min(c.len() - 1)] += 1.0;
                }
                let total = (points.len() + c.len()) as f64;
                Some(DimEstimator::Categorical { probs: counts.into_iter().map(|k| k / total).collect() })
            }
            _ => {
                let range = dim.internal_range()?;
                let bandwidth = scott_bandwidth(points, range.1 - range.0);
                Some(DimEstimator::Continuous { points: points.to_vec(), bandwidth, range })
            }
        }
    }

    pub fn density(&self, x: f64) -> f64 {
        match self {
            DimEstimator::Continuous { points, bandwidth, range } => {
                let n = points.len() as f64;
                let kde = if points.is_empty() { 0.0 } else { kde_density(points, x, *bandwidth, *range) };
                (n * kde + uniform_density(x, *range)) / (n + 1.0)
            }
            DimEstimator::Categorical { probs } => probs.get(x as usize).copied().unwrap_or(0.0),
        }
    }

    /// Draw from the estimate; Gaussian draws outside the range are retried,
    /// then clamped.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            DimEstimator::Continuous { points, bandwidth, range: (a, b) } => {
                let k = rng.gen_range(0..=points.len());
                if k == points.len() {
                    return a + rng.gen::<f64>() * (b - a);
                }
                let mut x = points[k];
                for _ in 0..100 {
                    x = points[k] + bandwidth * standard_normal(rng);
                    if x >= *a && x <= *b {
                        return x;
                    }
                }
                x.clamp(*a, *b)
            }
            DimEstimator::Categorical { probs } => {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                for (i, p) in probs.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        return i as f64;
                    }
                }
                (probs.len() - 1) as f64
            }
        }
    }
}

fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    // Box-Muller; 1 - u keeps the log argument in (0, 1].
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(2.0 * PI * u2)
}

/// Good/bad estimators for every non-fixed dimension.
#[derive(Debug, Clone)]
pub struct TpeModel {
    pub dims: Vec<(String, DimEstimator, DimEstimator)>,
}

impl TpeModel {
    pub fn fit(history: &[TrialRecord], space: &ParamSpace, gamma: f64) -> Result<Self> {
        let (good, bad) = split_good_bad(history, gamma)?;
        let coords = |idx: &[usize], name: &str| -> Vec<f64> {
            idx.iter().filter_map(|&i| history[i].internal.get(name).copied()).collect()
        };
        let mut dims = Vec::new();
        for (name, dim) in &space.dims {
            if let (Some(l), Some(g)) =
                (DimEstimator::fit(dim, &coords(&good, name)), DimEstimator::fit(dim, &coords(&bad, name)))
            {
                dims.push((name.clone(), l, g));
            }
        }
        Ok(Self { dims })
    }

    /// `Σ_d log l_d(x_d) - log g_d(x_d)`.
    pub fn log_ratio(&self, internal: &BTreeMap<String, f64>) -> f64 {
        self.dims
            .iter()
            .map(|(name, l, g)| {
                let x = internal.get(name).copied().unwrap_or(0.0);
                libm::log(l.density(x)) - libm::log(g.density(x))
            })
            .sum()
    }

    fn sample_good<R: Rng + ?Sized>(&self, rng: &mut R) -> BTreeMap<String, f64> {
        self.dims.iter().map(|(name, l, _)| (name.clone(), l.sample(rng))).collect()
    }
}

/// Candidates drawn by [`suggest_tpe`] together with their log l/g scores.
#[derive(Debug, Clone)]
pub struct Proposal {
    pub chosen: Suggestion,
    pub candidates: Vec<(Suggestion, f64)>,
}

/// Random sampling during the startup phase; afterwards the best of
/// `n_candidates` draws from the good-set estimate under l(x)/g(x).
pub fn suggest_tpe<R: Rng + ?Sized>(
    history: &[TrialRecord],
    space: &ParamSpace,
    cfg: &TpeConfig,
    rng: &mut R,
) -> Result<Proposal> {
    cfg.validate()?;
    if history.len() < cfg.n_startup_trials || history.is_empty() {
        let s = sample_random(space, rng);
        return Ok(Proposal { chosen: s.clone(), candidates: alloc::vec![(s, 0.0)] });
    }
    let model = TpeModel::fit(history, space, cfg.gamma)?;
    let candidates: Vec<(Suggestion, f64)> = (0..cfg.n_candidates)
        .map(|_| {
            let internal = model.sample_good(rng);
            let score = model.log_ratio(&internal);
            (space.build(internal), score)
        })
        .collect();
    let best = candidates.iter().enumerate().fold(0, |b, (i, c)| if c.1 > candidates[b].1 { i } else { b });
    Ok(Proposal { chosen: candidates[best].0.clone(), candidates })
}
