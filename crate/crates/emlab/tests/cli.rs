use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use emlab::corpus_io::read_corpus;
use emlab_core::synthlang::SynthConfig;

fn emlab(args: &[&str], cwd: &Path) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_emlab")).args(args).current_dir(cwd).output().unwrap();
    assert!(out.status.success(), "emlab {args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

#[test]
fn synth_writes_a_corpus_and_its_config() {
    let dir = tempfile::tempdir().unwrap();
    emlab(
        &[
            "synth",
            "--lang",
            "dyck",
            "--out",
            "d.txt",
            "--vocab",
            "20",
            "--tokens",
            "500",
            "--seed",
            "3",
            "--open-prob",
            "0.4",
        ],
        dir.path(),
    );
    let corpus = read_corpus(dir.path().join("d.txt")).unwrap();
    assert!(corpus.n_tokens() >= 500);
    let meta: SynthConfig = toml::from_str(&fs::read_to_string(dir.path().join("d.txt.meta")).unwrap()).unwrap();
    assert_eq!((meta.vocab_size, meta.n_tokens, meta.seed, meta.open_prob), (20, 500, 3, 0.4));
    // The recorded config regenerates the same file.
    let again = emlab_core::synthlang::generate(&meta).unwrap();
    assert_eq!(again.utterances(), corpus.utterances());
}

#[test]
fn eval_prints_one_json_object() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.txt"), "1 2\n3 4\n").unwrap();
    let out = emlab(&["eval", "--objective", "entropy", "--source", "c.txt"], dir.path());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 1);
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["value"], -2.0);
    assert_eq!(v["status"], "ok");
}

#[test]
fn play_search_analyze_and_replot() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(
        p.join("game.toml"),
        "n_attributes = 2\nn_values = 3\nn_distractors = 2\nembed_size = 4\nhidden_size = 8\nvocab_size = 5\nmessage_length = 3\nn_epochs = 3\n",
    )
    .unwrap();
    emlab(
        &[
            "play",
            "--config",
            "game.toml",
            "--out-corpus",
            "out/c.txt",
            "--corpus-tokens",
            "90",
            "--metrics",
            "m.jsonl",
            "--checkpoint",
            "ck.json",
        ],
        p,
    );
    let metrics: Vec<serde_json::Value> =
        fs::read_to_string(p.join("m.jsonl")).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(metrics.len(), 3);
    assert!(metrics.iter().all(|m| m["loss"].is_number() && m["accuracy"].is_number()));
    assert_eq!(read_corpus(p.join("out/c.txt")).unwrap().n_tokens(), 90);
    assert!(p.join("ck.json").exists());

    fs::write(
        p.join("search.toml"),
        r#"
        sampler = "random"
        n_trials = 4
        output_dir = "run"
        [space]
        vocab_size = { log_int = [2, 40] }
        [game]
        n_attributes = 2
        n_values = 3
        n_distractors = 2
        embed_size = 4
        hidden_size = 8
        message_length = 3
        n_epochs = 2
        [trial]
        corpus_tokens = 300
        [objective]
        kind = "entropy"
        "#,
    )
    .unwrap();
    emlab(&["search", "--config", "search.toml"], p);
    let first = fs::read_to_string(p.join("run/trials.jsonl")).unwrap();
    assert_eq!(first.lines().count(), 4);
    // A second invocation without --resume refuses to touch the log.
    let refused = Command::new(env!("CARGO_BIN_EXE_emlab"))
        .args(["search", "--config", "search.toml"])
        .current_dir(p)
        .output()
        .unwrap();
    assert!(!refused.status.success());
    emlab(&["search", "--config", "search.toml", "--resume"], p);
    assert_eq!(fs::read_to_string(p.join("run/trials.jsonl")).unwrap(), first);

    emlab(&["analyze", "--log", "run/trials.jsonl", "--out", "report", "--corpus", "run/corpora/trial_00000.txt"], p);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(p.join("report/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["counts"]["total"], 4);
    assert!(summary["rank_frequency"].is_object());
    emlab(&["replot", "--csv", "report/pareto.csv", "--out", "again.svg"], p);
    assert_eq!(fs::read(p.join("again.svg")).unwrap(), fs::read(p.join("report/pareto.svg")).unwrap());
}
