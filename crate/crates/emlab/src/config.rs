//! TOML configuration files for games, objectives and searches.

use std::fs;
use std::path::{Path, PathBuf};

use emlab_core::corpus::Corpus;
use emlab_core::objective::{ObjectiveKind, XferConfig};
use emlab_core::siggame::GameConfig;
use emlab_core::synthlang::{self, SynthConfig};
use emlab_core::tpe::{ParamSpace, Params, TpeConfig};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::corpus_io::read_corpus;
use crate::error::{io_err, Error, Result};

pub fn load_toml<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    toml::from_str(&text).map_err(|e| Error::Config { path: path.into(), msg: e.to_string() })
}

pub fn load_game_config(path: impl AsRef<Path>) -> Result<GameConfig> {
    let cfg: GameConfig = load_toml(&path)?;
    cfg.validate()?;
    Ok(cfg)
}

/// A target language: a corpus file, or a synthetic language generated on
/// the fly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TargetSpec {
    Path(PathBuf),
    Synth(SynthConfig),
}

impl TargetSpec {
    /// Relative paths are taken relative to `base`.
    pub fn load(&self, base: &Path) -> Result<Corpus> {
        match self {
            TargetSpec::Path(p) => read_corpus(base.join(p)),
            TargetSpec::Synth(cfg) => Ok(synthlang::generate(cfg)?),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObjectiveConfig {
    pub kind: ObjectiveKind,
    pub targets: Vec<TargetSpec>,
    /// Budgets and model of the transfer objective; its seed is shared by
    /// every trial so scores are comparable.
    pub xfer: XferConfig,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        Self { kind: ObjectiveKind::XferMini, targets: Vec::new(), xfer: XferConfig::default() }
    }
}

impl ObjectiveConfig {
    pub fn validate(&self) -> Result<()> {
        if self.kind == ObjectiveKind::XferMini {
            self.xfer.validate()?;
            if self.targets.is_empty() {
                return Err(Error::Invalid("the xfer_mini objective needs at least one target".into()));
            }
        }
        Ok(())
    }

    pub fn load_targets(&self, base: &Path) -> Result<Vec<Corpus>> {
        self.targets.iter().map(|t| t.load(base)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    #[default]
    Tpe,
    Random,
}

/// What each trial does besides training the game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrialConfig {
    /// Tokens of emergent language emitted after training.
    pub corpus_tokens: usize,
    /// Evaluation rounds for the recorded accuracy; 0 skips it.
    pub eval_rounds: usize,
    pub pool_size: usize,
    pub save_corpora: bool,
    pub save_checkpoints: bool,
    /// Also store wall-clock seconds in the trial log itself. Off by
    /// default so logs are reproducible byte for byte; timings always go
    /// to the `timings.jsonl` sidecar.
    pub record_wall_clock: bool,
}

impl Default for TrialConfig {
    fn default() -> Self {
        Self {
            corpus_tokens: 100_000,
            eval_rounds: 200,
            pool_size: 1000,
            save_corpora: true,
            save_checkpoints: false,
            record_wall_clock: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchConfig {
    #[serde(default)]
    pub sampler: SamplerKind,
    pub n_trials: usize,
    #[serde(default)]
    pub tpe: TpeConfig,
    /// Searched dimensions, named after [`GameConfig`] fields.
    pub space: ParamSpace,
    /// Values for every game field not in the space.
    #[serde(default)]
    pub game: GameConfig,
    #[serde(default)]
    pub trial: TrialConfig,
    #[serde(default)]
    pub objective: ObjectiveConfig,
    /// Prune trials whose corpus entropy (bits) is below this.
    #[serde(default)]
    pub entropy_gate: Option<f64>,
    #[serde(default = "one")]
    pub parallelism: usize,
    #[serde(default)]
    pub master_seed: u64,
    pub output_dir: PathBuf,
}

fn one() -> usize {
    1
}

impl SearchConfig {
    /// Loads a search config; a relative `output_dir` and relative target
    /// paths are resolved against the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut cfg: SearchConfig = load_toml(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.output_dir = base.join(&cfg.output_dir);
        for t in &mut cfg.objective.targets {
            if let TargetSpec::Path(p) = t {
                *p = base.join(&*p);
            }
        }
        cfg.validate().map_err(|e| Error::Config { path: path.into(), msg: e.to_string() })?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.space.validate()?;
        if self.sampler == SamplerKind::Tpe {
            self.tpe.validate()?;
            if self.n_trials > 0 && self.tpe.n_startup_trials > self.n_trials {
                return Err(Error::Invalid(format!(
                    "n_startup_trials ({}) exceeds n_trials ({})",
                    self.tpe.n_startup_trials, self.n_trials
                )));
            }
        }
        if self.parallelism == 0 {
            return Err(Error::Invalid("parallelism must be at least 1".into()));
        }
        if let Some(t) = self.entropy_gate {
            if t.is_nan() || t < 0.0 {
                return Err(Error::Invalid(format!("entropy_gate must be >= 0, got {t}")));
            }
        }
        if self.trial.corpus_tokens == 0 {
            return Err(Error::Invalid("trial.corpus_tokens must be positive".into()));
        }
        if self.trial.eval_rounds > 0 && self.trial.pool_size == 0 {
            return Err(Error::Invalid("trial.pool_size must be positive".into()));
        }
        self.objective.validate()?;
        // Every dimension must name a game field of a compatible type.
        let mut probe = self.space.clone();
        for dim in probe.dims.values_mut() {
            if let emlab_core::tpe::Dim::LogInt(lo, _) = dim {
                *dim = emlab_core::tpe::Dim::Fixed(emlab_core::tpe::ParamValue::Int(*lo));
            }
        }
        let params = emlab_core::tpe::sample_random(&probe, &mut emlab_core::rng::seeded(0)).params;
        apply_params(&self.game, &params)?;
        Ok(())
    }
}

/// Overrides `base` fields with `params`. Unknown names and values of the
/// wrong type are errors.
pub fn apply_params(base: &GameConfig, params: &Params) -> Result<GameConfig> {
    let mut v = serde_json::to_value(base).map_err(|e| Error::Invalid(e.to_string()))?;
    let obj = v.as_object_mut().ok_or_else(|| Error::Invalid("game config is not a table".into()))?;
    for (name, value) in params {
        if !obj.contains_key(name) {
            return Err(Error::Invalid(format!("{name} is not a game config field")));
        }
        obj.insert(name.clone(), serde_json::to_value(value).map_err(|e| Error::Invalid(e.to_string()))?);
    }
    let cfg: GameConfig =
        serde_json::from_value(v).map_err(|e| Error::Invalid(format!("cannot apply search parameters: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}
