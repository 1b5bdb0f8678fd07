use std::fs;
use std::path::Path;

use emlab::config::SearchConfig;
use emlab::search::{read_log, Search, CONFIG_FILE, LOG_FILE};
use emlab_core::objective::TrialStatus;

fn config(dir: &Path, extra: &str) -> SearchConfig {
    let text = format!(
        r#"
        n_trials = 5
        master_seed = 11
        output_dir = "{}"
        [tpe]
        n_startup_trials = 2
        [space]
        vocab_size = {{ log_int = [2, 32] }}
        temperature = {{ log_uniform = [0.5, 4.0] }}
        cell = {{ categorical = ["gru", "lstm"] }}
        [game]
        n_attributes = 2
        n_values = 3
        n_distractors = 2
        embed_size = 4
        hidden_size = 8
        message_length = 3
        n_epochs = 2
        [trial]
        corpus_tokens = 600
        eval_rounds = 20
        pool_size = 50
        {extra}
        "#,
        dir.display()
    );
    let cfg: SearchConfig = toml::from_str(&text).unwrap();
    cfg.validate().unwrap();
    cfg
}

const ENTROPY: &str = "[objective]\nkind = \"entropy\"";

const XFER: &str = r#"
    [objective]
    kind = "xfer_mini"
    targets = [{ lang = "regular", n_tokens = 900, vocab_size = 30, seed = 4 }]
    [objective.xfer]
    pretrain_tokens = 600
    finetune_tokens = 500
    finetune_epochs = 1
    test_tokens = 300
    [objective.xfer.lm]
    embed_dim = 4
    hidden_dim = 8
    layers = 1
    vocab_cap = 64
    batch_size = 4
    bptt = 8
"#;

fn run(cfg: &SearchConfig, resume: bool) -> String {
    Search::new(cfg.clone()).unwrap().run(resume, |_| {}).unwrap();
    fs::read_to_string(cfg.output_dir.join(LOG_FILE)).unwrap()
}

#[test]
fn zero_trials_give_an_empty_log() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = SearchConfig { n_trials: 0, ..config(tmp.path(), ENTROPY) };
    assert_eq!(run(&cfg, false), "");
    assert!(read_log(cfg.output_dir.join(LOG_FILE)).unwrap().is_empty());
}

#[test]
fn runs_are_byte_identical_across_output_dirs() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let log_a = run(&config(a.path(), XFER), false);
    let log_b = run(&config(b.path(), XFER), false);
    assert_eq!(log_a, log_b);
    let records = read_log(a.path().join(LOG_FILE)).unwrap();
    assert_eq!(records.iter().map(|r| r.index).collect::<Vec<_>>(), [0, 1, 2, 3, 4]);
    let cfg = config(a.path(), XFER);
    for r in &records {
        cfg.space.check(&r.params).unwrap();
        assert_eq!(r.status, TrialStatus::Ok);
        assert!(r.value.is_finite() && r.per_target.len() == 1);
        assert!(a.path().join(r.corpus_path.as_ref().unwrap()).exists());
        assert!(r.wall_clock_secs.is_none());
    }
    // Timings live in the sidecar.
    assert_eq!(fs::read_to_string(a.path().join("timings.jsonl")).unwrap().lines().count(), 5);
}

#[test]
fn resuming_an_interrupted_search_reproduces_the_log() {
    let full_dir = tempfile::tempdir().unwrap();
    let full = run(&config(full_dir.path(), ENTROPY), false);
    let lines: Vec<&str> = full.split_inclusive('\n').collect();
    for k in [0, 1, 3] {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config(dir.path(), ENTROPY);
        // k complete lines and half of the next one, as if killed mid-write.
        let mut partial: String = lines[..k].concat();
        partial.push_str(&lines[k][..lines[k].len() / 2]);
        fs::write(dir.path().join(LOG_FILE), &partial).unwrap();
        fs::copy(full_dir.path().join(CONFIG_FILE), dir.path().join(CONFIG_FILE)).unwrap();
        assert_eq!(run(&cfg, true), full, "resumed after {k} trials");
    }
}

#[test]
fn existing_logs_and_changed_configs_are_refused() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), ENTROPY);
    run(&cfg, false);
    assert!(Search::new(cfg.clone()).unwrap().run(false, |_| {}).is_err());
    let changed = SearchConfig { master_seed: 12, ..cfg.clone() };
    assert!(Search::new(changed).unwrap().run(true, |_| {}).is_err());
    // A finished search resumes to the same log without running anything.
    let before = fs::read_to_string(dir.path().join(LOG_FILE)).unwrap();
    assert_eq!(run(&cfg, true), before);
}

#[test]
fn parallel_workers_complete_every_trial() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SearchConfig { parallelism: 3, n_trials: 7, ..config(dir.path(), ENTROPY) };
    let records = Search::new(cfg.clone()).unwrap().run(false, |_| {}).unwrap();
    let mut idx: Vec<u64> = records.iter().map(|r| r.index).collect();
    idx.sort_unstable();
    assert_eq!(idx, (0..7).collect::<Vec<_>>());
    assert_eq!(read_log(dir.path().join(LOG_FILE)).unwrap(), records);
}

#[test]
fn gated_trials_are_pruned_with_penalties() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SearchConfig { entropy_gate: Some(1e6), ..config(dir.path(), ENTROPY) };
    let records = Search::new(cfg).unwrap().run(false, |_| {}).unwrap();
    assert!(records.iter().all(|r| r.status == TrialStatus::Pruned && r.value == 1.0 && r.entropy_bits.is_some()));
}

#[test]
fn failing_trials_are_recorded_and_the_search_continues() {
    let dir = tempfile::tempdir().unwrap();
    // The target is too short for the finetune and test budgets.
    let xfer = XFER.replace("n_tokens = 900", "n_tokens = 100");
    let records = Search::new(config(dir.path(), &xfer)).unwrap().run(false, |_| {}).unwrap();
    assert_eq!(records.len(), 5);
    for r in &records {
        assert_eq!(r.status, TrialStatus::Failed);
        assert!(r.error.is_some());
        assert_eq!(r.value, 1.0);
    }
}

#[test]
fn penalties_track_the_worst_completed_value() {
    let dir = tempfile::tempdir().unwrap();
    // Gate at a level some trials pass and some do not.
    let cfg = SearchConfig { n_trials: 12, entropy_gate: Some(1.2), ..config(dir.path(), ENTROPY) };
    let records = Search::new(cfg).unwrap().run(false, |_| {}).unwrap();
    let pruned = records.iter().filter(|r| r.status == TrialStatus::Pruned).count();
    assert!(pruned > 0 && pruned < records.len(), "{pruned} of {} pruned", records.len());
    for (i, r) in records.iter().enumerate() {
        if r.status != TrialStatus::Ok {
            let worst = records[..i]
                .iter()
                .filter(|p| p.status == TrialStatus::Ok)
                .map(|p| p.value)
                .fold(None, |w: Option<f64>, v| Some(w.map_or(v, |w| w.max(v))));
            assert_eq!(r.value, worst.unwrap_or(0.0) + 1.0);
        }
    }
}

#[test]
fn an_unwritable_output_dir_aborts() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("not_a_dir");
    fs::write(&file, "x").unwrap();
    let cfg = config(&file, ENTROPY);
    assert!(Search::new(cfg).unwrap().run(false, |_| {}).is_err());
}
