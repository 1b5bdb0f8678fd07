//! Search orchestration: suggest → train game → emit corpus → gate →
//! objective → append to the trial log.
//!
//! The log (`trials.jsonl`) is append-only JSON Lines and is the sampler's
//! only state, so a search is resumed by replaying it. Per-trial seeds are
//! `derive_seed(master_seed, index)`.

use std::collections::{BTreeSet, VecDeque};
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use emlab_core::corpus::{unigram_entropy, Corpus};
use emlab_core::objective::{
    entropy_objective, gate_decision, penalty_value, xferbench_mini, GateDecision, ObjectiveKind, TrialStatus,
};
use emlab_core::rng::{derive_seed, substream};
use emlab_core::siggame::{self, GameConfig};
use emlab_core::tpe::{sample_random, suggest_tpe, Suggestion, TrialRecord};
use serde::{Deserialize, Serialize};

use crate::config::{apply_params, SamplerKind, SearchConfig};
use crate::corpus_io::write_corpus;
use crate::error::{io_err, Error, Result};

pub const LOG_FILE: &str = "trials.jsonl";
pub const TIMINGS_FILE: &str = "timings.jsonl";
pub const CONFIG_FILE: &str = "config.json";

// Substreams of a trial seed. The game itself uses 0 and 1.
const SAMPLER_STREAM: u64 = 10;
const EVAL_STREAM: u64 = 11;
/// Substream used to emit a trained game's corpus.
pub const EMIT_STREAM: u64 = 12;

/// What a trial produced before penalties are assigned.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub value: Option<f64>,
    pub status: TrialStatus,
    pub entropy_bits: Option<f64>,
    pub accuracy: Option<f64>,
    pub per_target: Vec<f64>,
    pub corpus_path: Option<String>,
    pub checkpoint_path: Option<String>,
    pub error: Option<String>,
}

impl TrialOutcome {
    fn pending() -> Self {
        Self {
            value: None,
            status: TrialStatus::Ok,
            entropy_bits: None,
            accuracy: None,
            per_target: Vec::new(),
            corpus_path: None,
            checkpoint_path: None,
            error: None,
        }
    }

    fn fail(self, err: impl ToString) -> Self {
        Self { status: TrialStatus::Failed, error: Some(err.to_string()), ..self }
    }
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    config: GameConfig,
    params: emlab_core::autodiff::ParamStore,
}

#[derive(Serialize)]
struct Timing {
    index: u64,
    wall_clock_secs: f64,
}

/// Loaded search inputs shared by all trials.
pub struct Search {
    cfg: SearchConfig,
    targets: Vec<Corpus>,
}

impl Search {
    pub fn new(cfg: SearchConfig) -> Result<Self> {
        cfg.validate()?;
        let targets = match cfg.objective.kind {
            ObjectiveKind::XferMini => cfg.objective.load_targets(Path::new("."))?,
            ObjectiveKind::Entropy => Vec::new(),
        };
        Ok(Self { cfg, targets })
    }

    pub fn config(&self) -> &SearchConfig {
        &self.cfg
    }

    pub fn log_path(&self) -> PathBuf {
        self.cfg.output_dir.join(LOG_FILE)
    }

    /// Runs one trial end to end. Failures inside the trial become a
    /// failed outcome; only artifact IO errors are returned.
    pub fn run_trial(&self, index: u64, suggestion: &Suggestion) -> Result<TrialOutcome> {
        let seed = derive_seed(self.cfg.master_seed, index);
        let game = match apply_params(&self.cfg.game, &suggestion.params) {
            Ok(g) => GameConfig { seed, ..g },
            Err(e) => return Ok(TrialOutcome::pending().fail(e)),
        };
        let trained = match siggame::train(&game) {
            Ok(t) => t,
            Err(e) => return Ok(TrialOutcome::pending().fail(e)),
        };
        let t = &self.cfg.trial;
        let mut out = TrialOutcome::pending();
        if t.save_checkpoints {
            let rel = format!("checkpoints/trial_{index:05}.json");
            let ckpt = Checkpoint { config: game.clone(), params: trained.agents.store.clone() };
            let text = serde_json::to_string(&ckpt).map_err(|e| Error::Invalid(e.to_string()))?;
            self.write_artifact(&rel, text.as_bytes())?;
            out.checkpoint_path = Some(rel);
        }
        if t.eval_rounds > 0 {
            match siggame::eval_accuracy(&trained.agents, t.eval_rounds, t.pool_size, &mut substream(seed, EVAL_STREAM))
            {
                Ok(a) => out.accuracy = Some(a),
                Err(e) => return Ok(out.fail(e)),
            }
        }
        let corpus = match siggame::emit_corpus(&trained.agents, t.corpus_tokens, &mut substream(seed, EMIT_STREAM)) {
            Ok(c) => c,
            Err(e) => return Ok(out.fail(e)),
        };
        if t.save_corpora {
            let rel = format!("corpora/trial_{index:05}.txt");
            write_corpus(&corpus, self.cfg.output_dir.join(&rel))?;
            out.corpus_path = Some(rel);
        }
        let h = match unigram_entropy(&corpus) {
            Ok(h) => h,
            Err(e) => return Ok(out.fail(e)),
        };
        out.entropy_bits = Some(h);
        if let Some(threshold) = self.cfg.entropy_gate {
            if gate_decision(h, threshold) == GateDecision::Pruned {
                out.status = TrialStatus::Pruned;
                return Ok(out);
            }
        }
        let score = match self.cfg.objective.kind {
            ObjectiveKind::Entropy => entropy_objective(&corpus),
            ObjectiveKind::XferMini => xferbench_mini(&corpus, &self.targets, &self.cfg.objective.xfer),
        };
        match score {
            Ok(s) => {
                out.value = s.value;
                out.status = s.status;
                out.per_target = s.per_target;
                if s.status == TrialStatus::Failed {
                    out.error = Some("objective diverged".into());
                }
                Ok(out)
            }
            Err(e) => Ok(out.fail(e)),
        }
    }

    fn write_artifact(&self, rel: &str, bytes: &[u8]) -> Result<()> {
        let path = self.cfg.output_dir.join(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
        fs::write(&path, bytes).map_err(io_err(&path))
    }

    fn suggest(&self, index: u64, history: &[TrialRecord]) -> Result<Suggestion> {
        let rng = &mut substream(derive_seed(self.cfg.master_seed, index), SAMPLER_STREAM);
        Ok(match self.cfg.sampler {
            SamplerKind::Random => sample_random(&self.cfg.space, rng),
            SamplerKind::Tpe => suggest_tpe(history, &self.cfg.space, &self.cfg.tpe, rng)?.chosen,
        })
    }

    /// Runs (or with `resume`, continues) the search and returns the full
    /// log in file order. `on_trial` sees each record as it is appended.
    pub fn run(&self, resume: bool, on_trial: impl Fn(&TrialRecord) + Sync) -> Result<Vec<TrialRecord>> {
        let dir = &self.cfg.output_dir;
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let log_path = self.log_path();
        let config_path = dir.join(CONFIG_FILE);
        let config_json = config_snapshot(&self.cfg)?;
        let history = if resume && log_path.exists() {
            if let Ok(saved) = fs::read_to_string(&config_path) {
                if saved != config_json {
                    return Err(Error::Invalid(format!(
                        "{} differs from the current config; refusing to resume",
                        config_path.display()
                    )));
                }
            }
            recover_log(&log_path)?
        } else {
            if fs::metadata(&log_path).map(|m| m.len() > 0).unwrap_or(false) {
                return Err(Error::Invalid(format!(
                    "{} already exists; pass --resume to continue",
                    log_path.display()
                )));
            }
            Vec::new()
        };
        fs::write(&config_path, &config_json).map_err(io_err(&config_path))?;
        let mut done = BTreeSet::new();
        for r in &history {
            self.cfg.space.check(&r.params).map_err(|e| Error::Invalid(format!("trial {}: {e}", r.index)))?;
            if !done.insert(r.index) {
                return Err(Error::Invalid(format!("trial {} appears twice in the log", r.index)));
            }
        }
        let queue: VecDeque<u64> = (0..self.cfg.n_trials as u64).filter(|i| !done.contains(i)).collect();
        let open = |p: &Path| OpenOptions::new().create(true).append(true).open(p).map_err(io_err(p));
        let timings_path = dir.join(TIMINGS_FILE);
        let shared =
            Mutex::new(Shared { history, queue, log: open(&log_path)?, timings: open(&timings_path)?, failure: None });
        let workers = self.cfg.parallelism.min(shared.lock().unwrap().queue.len()).max(1);
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| self.worker(&shared, &log_path, &timings_path, &on_trial));
            }
        });
        let shared = shared.into_inner().unwrap();
        match shared.failure {
            Some(e) => Err(e),
            None => Ok(shared.history),
        }
    }

    fn worker(
        &self,
        shared: &Mutex<Shared>,
        log_path: &Path,
        timings_path: &Path,
        on_trial: &(impl Fn(&TrialRecord) + Sync),
    ) {
        loop {
            let (index, suggestion) = {
                let mut s = shared.lock().unwrap();
                if s.failure.is_some() {
                    return;
                }
                let Some(index) = s.queue.pop_front() else { return };
                match self.suggest(index, &s.history) {
                    Ok(sug) => (index, sug),
                    Err(e) => {
                        s.failure = Some(e);
                        return;
                    }
                }
            };
            let start = Instant::now();
            let outcome = self.run_trial(index, &suggestion);
            let secs = start.elapsed().as_secs_f64();
            let mut s = shared.lock().unwrap();
            let outcome = match outcome {
                Ok(o) => o,
                Err(e) => {
                    s.failure.get_or_insert(e);
                    return;
                }
            };
            let record = self.record(index, suggestion, outcome, secs, &s.history);
            let line = serde_json::to_string(&record).expect("trial records serialize") + "\n";
            let timing =
                serde_json::to_string(&Timing { index, wall_clock_secs: secs }).expect("timings serialize") + "\n";
            if let Err(e) = s.log.write_all(line.as_bytes()).and_then(|_| s.log.flush()) {
                s.failure.get_or_insert(Error::Io { path: log_path.into(), source: e });
                return;
            }
            if let Err(e) = s.timings.write_all(timing.as_bytes()) {
                s.failure.get_or_insert(Error::Io { path: timings_path.into(), source: e });
                return;
            }
            on_trial(&record);
            s.history.push(record);
        }
    }

    fn record(&self, index: u64, sug: Suggestion, o: TrialOutcome, secs: f64, history: &[TrialRecord]) -> TrialRecord {
        let (value, status) = match (o.status, o.value) {
            (TrialStatus::Ok, Some(v)) if v.is_finite() => (v, TrialStatus::Ok),
            (status, _) => {
                let ok = history.iter().filter(|r| r.status == TrialStatus::Ok).map(|r| r.value);
                (penalty_value(ok), if status == TrialStatus::Pruned { status } else { TrialStatus::Failed })
            }
        };
        TrialRecord {
            index,
            params: sug.params,
            internal: sug.internal,
            value,
            status,
            wall_clock_secs: self.cfg.trial.record_wall_clock.then_some(secs),
            entropy_bits: o.entropy_bits,
            accuracy: o.accuracy,
            per_target: o.per_target,
            corpus_path: o.corpus_path,
            checkpoint_path: o.checkpoint_path,
            error: o.error,
        }
    }
}

/// The config as saved next to the log. The output directory is left out so
/// a run can be moved or copied and still resumed.
fn config_snapshot(cfg: &SearchConfig) -> Result<String> {
    let mut v = serde_json::to_value(cfg).map_err(|e| Error::Invalid(e.to_string()))?;
    if let Some(obj) = v.as_object_mut() {
        obj.remove("output_dir");
    }
    Ok(serde_json::to_string_pretty(&v).map_err(|e| Error::Invalid(e.to_string()))? + "\n")
}

struct Shared {
    history: Vec<TrialRecord>,
    queue: VecDeque<u64>,
    log: File,
    timings: File,
    failure: Option<Error>,
}

/// Parses a trial log. A final line without its newline, or one that does
/// not parse, is an interrupted write and is ignored; any other bad line is
/// an error.
pub fn read_log(path: impl AsRef<Path>) -> Result<Vec<TrialRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(parse_log(&text, path)?.0)
}

fn parse_log(text: &str, path: &Path) -> Result<(Vec<TrialRecord>, usize)> {
    let mut records = Vec::new();
    let mut good_bytes = 0;
    let lines: Vec<&str> = text.split_inclusive('\n').collect();
    for (i, line) in lines.iter().enumerate() {
        let last = i + 1 == lines.len();
        if !line.ends_with('\n') {
            break;
        }
        match serde_json::from_str::<TrialRecord>(line) {
            Ok(r) => records.push(r),
            Err(_) if last => break,
            Err(e) => return Err(Error::Parse { path: path.into(), line: i + 1, msg: e.to_string() }),
        }
        good_bytes += line.len();
    }
    Ok((records, good_bytes))
}

/// Reads the log and truncates any interrupted final line.
fn recover_log(path: &Path) -> Result<Vec<TrialRecord>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let (records, good) = parse_log(&text, path)?;
    if good < text.len() {
        let f = OpenOptions::new().write(true).open(path).map_err(io_err(path))?;
        f.set_len(good as u64).map_err(io_err(path))?;
    }
    Ok(records)
}

pub fn run_search(cfg: SearchConfig, resume: bool) -> Result<Vec<TrialRecord>> {
    Search::new(cfg)?.run(resume, |_| {})
}
