use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use emlab::config::{load_game_config, load_toml, ObjectiveConfig, SearchConfig, TargetSpec};
use emlab::corpus_io::{read_corpus, write_corpus};
use emlab::search::{Search, EMIT_STREAM};
use emlab_core::objective::{entropy_objective, xferbench_mini, ObjectiveKind};
use emlab_core::rng::substream;
use emlab_core::siggame;
use emlab_core::synthlang::{self, LanguageKind, SynthConfig};

#[derive(Parser)]
#[command(name = "emlab", version, about = "Emergent-language hyperparameter search laboratory")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic corpus and a `.meta` sidecar with its config.
    Synth {
        #[arg(long)]
        lang: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        vocab: Option<u32>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        tokens: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        stop_prob: Option<f64>,
        #[arg(long)]
        classes: Option<u32>,
        #[arg(long)]
        repeat_prob: Option<f64>,
        #[arg(long)]
        open_prob: Option<f64>,
    },
    /// Train a signalling game and emit a corpus from the trained sender.
    Play {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_corpus: PathBuf,
        #[arg(long, default_value_t = 100_000)]
        corpus_tokens: usize,
        /// Per-epoch metrics as JSON lines.
        #[arg(long)]
        metrics: PathBuf,
        /// Also save the trained parameters as JSON.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Score a corpus and print the result as one JSON object.
    Eval {
        #[arg(long)]
        objective: ObjectiveKind,
        #[arg(long)]
        source: PathBuf,
        #[arg(long, num_args = 1..)]
        targets: Vec<PathBuf>,
        /// Objective config (budgets, LM shape, extra targets).
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run or resume a hyperparameter search.
    Search {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        resume: bool,
    },
    /// Summarise a trial log and draw its figures.
    Analyze {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Corpus for the rank-frequency figure.
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Re-draw an SVG figure from its CSV sidecar.
    Replot {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn meta_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".meta");
    s.into()
}

fn main() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::Synth { lang, out, vocab, alpha, beta, tokens, seed, stop_prob, classes, repeat_prob, open_prob } => {
            let lang: LanguageKind = lang.parse()?;
            let d = SynthConfig::new(lang);
            let cfg = SynthConfig {
                lang,
                n_tokens: tokens.unwrap_or(d.n_tokens),
                vocab_size: vocab.unwrap_or(d.vocab_size),
                alpha: alpha.unwrap_or(d.alpha),
                beta: beta.unwrap_or(d.beta),
                stop_prob: stop_prob.unwrap_or(d.stop_prob),
                n_classes: classes.unwrap_or(d.n_classes),
                repeat_prob: repeat_prob.unwrap_or(d.repeat_prob),
                open_prob: open_prob.unwrap_or(d.open_prob),
                seed: seed.unwrap_or(d.seed),
            };
            let corpus = synthlang::generate(&cfg)?;
            write_corpus(&corpus, &out)?;
            let meta = meta_path(&out);
            fs::write(&meta, toml::to_string(&cfg)?).with_context(|| format!("writing {}", meta.display()))?;
            eprintln!("wrote {} utterances, {} tokens to {}", corpus.len(), corpus.n_tokens(), out.display());
        }
        Cmd::Play { config, out_corpus, corpus_tokens, metrics, checkpoint } => {
            let cfg = load_game_config(&config)?;
            let mut m = create(&metrics)?;
            let mut io_result = Ok(());
            let trained = siggame::train_with(&cfg, |e| {
                if io_result.is_ok() {
                    io_result =
                        serde_json::to_writer(&mut m, e).map_err(anyhow::Error::from).and_then(|_| Ok(writeln!(m)?));
                }
            })?;
            io_result?;
            m.flush()?;
            if let Some(path) = checkpoint {
                let w = create(&path)?;
                serde_json::to_writer(w, &serde_json::json!({ "config": cfg, "params": trained.agents.store }))?;
            }
            let corpus = siggame::emit_corpus(&trained.agents, corpus_tokens, &mut substream(cfg.seed, EMIT_STREAM))?;
            write_corpus(&corpus, &out_corpus)?;
            if let Some(acc) = trained.final_accuracy() {
                eprintln!("final training accuracy {acc:.4}");
            }
        }
        Cmd::Eval { objective, source, targets, config } => {
            let mut cfg: ObjectiveConfig = match &config {
                Some(p) => load_toml(p)?,
                None => ObjectiveConfig::default(),
            };
            let base = config.as_deref().and_then(Path::parent).unwrap_or(Path::new(".")).to_path_buf();
            cfg.kind = objective;
            cfg.targets.extend(
                targets.into_iter().map(|t| TargetSpec::Path(std::env::current_dir().unwrap_or_default().join(t))),
            );
            cfg.validate()?;
            let corpus = read_corpus(&source)?;
            let score = match cfg.kind {
                ObjectiveKind::Entropy => entropy_objective(&corpus)?,
                ObjectiveKind::XferMini => xferbench_mini(&corpus, &cfg.load_targets(&base)?, &cfg.xfer)?,
            };
            println!("{}", serde_json::to_string(&score)?);
        }
        Cmd::Search { config, resume } => {
            let cfg = SearchConfig::load(&config)?;
            let search = Search::new(cfg)?;
            let n = search.config().n_trials;
            let log = search.run(resume, |r| {
                eprintln!("trial {}/{n}: {:?} value {:.5}", r.index + 1, r.status, r.value);
            })?;
            eprintln!("{} trials in {}", log.len(), search.log_path().display());
        }
        Cmd::Analyze { log, out, corpus } => {
            let summary = emlab::report::report(&log, &out, corpus.as_deref())?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Cmd::Replot { csv, out } => emlab::plot::replot(&csv, &out)?,
    }
    Ok(())
}
