//! Post-hoc analysis of a trial log: summary statistics and figures.
//!
//! Only `ok` trials enter correlations, fits and the Pareto front; pruned
//! and failed trials are counted and otherwise ignored. The summary format
//! is described in `docs/summary.md`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use emlab_core::analysis::{
    fit_single_predictor, lower_convex_envelope, pareto_front, pearson, rank_frequency_slope, tail_slope, Regression,
};
use emlab_core::corpus::{rank_frequency, Corpus};
use emlab_core::objective::TrialStatus;
use emlab_core::tpe::{ParamValue, Params, TrialRecord};
use serde::{Deserialize, Serialize};

use crate::error::{io_err, Error, Result};
use crate::plot::{self, Datum, Figure, Mark, Panel, PlotKind, Series};

pub const SUMMARY_FILE: &str = "summary.json";

/// Below this many ok trials the summary carries `low_sample: true`.
pub const LOW_SAMPLE: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub total: usize,
    pub ok: usize,
    pub pruned: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    /// Number of ok trials with both quantities recorded.
    pub n: usize,
    /// `None` when fewer than 2 points or a variable is constant.
    pub r: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correlations {
    pub entropy_score: Correlation,
    pub accuracy_score: Correlation,
    pub entropy_accuracy: Correlation,
}

/// Overall score regressed on one target's score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetFit {
    pub target: usize,
    pub n: usize,
    pub fit: Option<Regression>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Best {
    pub index: u64,
    pub value: f64,
    pub params: Params,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pareto {
    /// Trial indices on the (entropy, score) front, ascending.
    pub front: Vec<u64>,
    /// Lower convex envelope of the (entropy, score) points, left to right.
    pub envelope: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankFrequencyStats {
    pub corpus: String,
    pub n_types: usize,
    pub n_tokens: usize,
    pub fit: Option<Regression>,
    pub tail: Option<Regression>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub counts: Counts,
    pub low_sample: bool,
    pub correlations: Correlations,
    pub per_target: Vec<TargetFit>,
    pub best: Best,
    pub pareto: Pareto,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank_frequency: Option<RankFrequencyStats>,
    /// Files written, relative to the output directory.
    pub files: Vec<String>,
}

fn correlation(pts: &[(f64, f64)]) -> Correlation {
    let (xs, ys): (Vec<f64>, Vec<f64>) = pts.iter().copied().unzip();
    Correlation { n: pts.len(), r: pearson(&xs, &ys).ok() }
}

fn pairs(ok: &[&TrialRecord], f: impl Fn(&TrialRecord) -> Option<(f64, f64)>) -> Vec<(u64, f64, f64)> {
    ok.iter()
        .filter_map(|r| f(r).map(|(x, y)| (r.index, x, y)))
        .filter(|p| p.1.is_finite() && p.2.is_finite())
        .collect()
}

fn xy(p: &[(u64, f64, f64)]) -> Vec<(f64, f64)> {
    p.iter().map(|&(_, x, y)| (x, y)).collect()
}

fn labelled(name: &str, mark: Mark, p: &[(u64, f64, f64)]) -> Series {
    Series::new(name, mark, p.iter().map(|&(i, x, y)| Datum { label: format!("trial {i}"), x, y }).collect())
}

fn r_note(c: &Correlation) -> String {
    match c.r {
        Some(r) => format!("Pearson r = {r:.3} (n = {})", c.n),
        None => format!("Pearson r undefined (n = {})", c.n),
    }
}

/// Computes the summary statistics for a log. Needs at least 2 ok trials.
pub fn summarize(records: &[TrialRecord]) -> Result<Summary> {
    let count = |s: TrialStatus| records.iter().filter(|r| r.status == s).count();
    let counts = Counts {
        total: records.len(),
        ok: count(TrialStatus::Ok),
        pruned: count(TrialStatus::Pruned),
        failed: count(TrialStatus::Failed),
    };
    if counts.ok < 2 {
        return Err(Error::Core(emlab_core::Error::InsufficientData(format!(
            "a report needs at least 2 ok trials, the log has {}",
            counts.ok
        ))));
    }
    let ok: Vec<&TrialRecord> = records.iter().filter(|r| r.status == TrialStatus::Ok).collect();
    let es = pairs(&ok, |r| Some((r.entropy_bits?, r.value)));
    let as_ = pairs(&ok, |r| Some((r.accuracy?, r.value)));
    let ea = pairs(&ok, |r| Some((r.entropy_bits?, r.accuracy?)));
    let n_targets = ok.iter().map(|r| r.per_target.len()).max().unwrap_or(0);
    let per_target = (0..n_targets)
        .map(|t| {
            let p = xy(&pairs(&ok, |r| Some((*r.per_target.get(t)?, r.value))));
            TargetFit { target: t, n: p.len(), fit: fit_single_predictor(&p).ok() }
        })
        .collect();
    let best = ok.iter().min_by(|a, b| a.value.total_cmp(&b.value).then(a.index.cmp(&b.index))).unwrap();
    let front = pareto_front(&xy(&es)).into_iter().map(|i| es[i].0).collect();
    Ok(Summary {
        counts,
        low_sample: ok.len() < LOW_SAMPLE,
        correlations: Correlations {
            entropy_score: correlation(&xy(&es)),
            accuracy_score: correlation(&xy(&as_)),
            entropy_accuracy: correlation(&xy(&ea)),
        },
        per_target,
        best: Best { index: best.index, value: best.value, params: best.params.clone() },
        pareto: Pareto { front, envelope: lower_convex_envelope(&xy(&es)) },
        rank_frequency: None,
        files: Vec::new(),
    })
}

/// One panel per parameter that takes more than one value among ok trials,
/// with the score on y. Strings become categorical ticks.
pub fn slices(records: &[TrialRecord]) -> Figure {
    let ok: Vec<&TrialRecord> = records.iter().filter(|r| r.status == TrialStatus::Ok).collect();
    let mut values: BTreeMap<&str, Vec<(u64, &ParamValue, f64)>> = BTreeMap::new();
    for r in &ok {
        for (name, v) in &r.params {
            values.entry(name).or_default().push((r.index, v, r.value));
        }
    }
    let mut panels = Vec::new();
    for (name, vals) in values {
        if vals.iter().all(|v| v.1 == vals[0].1) {
            continue;
        }
        let mut panel = Panel { title: name.into(), x_label: name.into(), y_label: "score".into(), ..Panel::default() };
        let data: Vec<Datum> = if vals.iter().all(|v| v.1.as_f64().is_some()) {
            panel.log_x = vals.iter().all(|v| v.1.as_f64().unwrap() > 0.0);
            vals.iter().map(|&(i, v, y)| Datum { label: format!("trial {i}"), x: v.as_f64().unwrap(), y }).collect()
        } else {
            let mut choices: Vec<String> = vals.iter().map(|v| v.1.to_string()).collect();
            choices.sort();
            choices.dedup();
            panel.x_ticks = choices.iter().enumerate().map(|(k, c)| (k as f64, c.clone())).collect();
            vals.iter()
                .map(|&(i, v, y)| {
                    let k = choices.iter().position(|c| *c == v.to_string()).unwrap();
                    Datum { label: format!("trial {i}"), x: k as f64, y }
                })
                .collect()
        };
        panel.series.push(Series::new("", Mark::Point, data));
        panels.push(panel);
    }
    Figure { kind: PlotKind::HyperparamSlices, title: "score by hyperparameter".into(), panels }
}

/// Reads the log at `log` (its complete-line prefix), writes figures and
/// `summary.json` into `out_dir`, and returns the summary.
pub fn report(log: &Path, out_dir: &Path, corpus: Option<&Path>) -> Result<Summary> {
    let records = crate::search::read_log(log)?;
    let corpus = corpus.map(|p| crate::corpus_io::read_corpus(p).map(|c| (p.to_path_buf(), c))).transpose()?;
    report_records(&records, out_dir, corpus.as_ref().map(|(p, c)| (p.as_path(), c)))
}

pub fn report_records(records: &[TrialRecord], out_dir: &Path, corpus: Option<(&Path, &Corpus)>) -> Result<Summary> {
    let mut summary = summarize(records)?;
    let ok: Vec<&TrialRecord> = records.iter().filter(|r| r.status == TrialStatus::Ok).collect();
    let es = pairs(&ok, |r| Some((r.entropy_bits?, r.value)));
    let as_ = pairs(&ok, |r| Some((r.accuracy?, r.value)));
    let ea = pairs(&ok, |r| Some((r.entropy_bits?, r.accuracy?)));
    let c = &summary.correlations;
    let mut figures: Vec<(&str, Figure)> = vec![
        (
            "entropy_vs_score",
            plot::scatter(
                "entropy vs score",
                "unigram entropy (bits)",
                "score",
                vec![labelled("", Mark::Point, &es)],
                &r_note(&c.entropy_score),
            ),
        ),
        (
            "accuracy_vs_score",
            plot::scatter(
                "accuracy vs score",
                "game accuracy",
                "score",
                vec![labelled("", Mark::Point, &as_)],
                &r_note(&c.accuracy_score),
            ),
        ),
        (
            "entropy_vs_accuracy",
            plot::scatter(
                "entropy vs accuracy",
                "unigram entropy (bits)",
                "game accuracy",
                vec![labelled("", Mark::Point, &ea)],
                &r_note(&c.entropy_accuracy),
            ),
        ),
    ];
    let front: Vec<(u64, f64, f64)> = es.iter().copied().filter(|p| summary.pareto.front.contains(&p.0)).collect();
    figures.push((
        "pareto",
        plot::scatter(
            "entropy and score",
            "unigram entropy (bits)",
            "score",
            vec![
                labelled("trials", Mark::Point, &es),
                labelled("pareto front", Mark::Point, &front),
                Series::xy("lower envelope", Mark::Line, summary.pareto.envelope.iter().copied()),
            ],
            "",
        ),
    ));
    figures.push(("slices", slices(records)));
    let mut ranked: Vec<&&TrialRecord> = ok.iter().collect();
    ranked.sort_by(|a, b| a.value.total_cmp(&b.value).then(a.index.cmp(&b.index)));
    let bars: Vec<(String, f64)> = ranked.iter().take(20).map(|r| (format!("#{}", r.index), r.value)).collect();
    figures.push(("scores", plot::score_bars("best trials", "score", &bars)));
    if let Some((path, corpus)) = corpus {
        let entries = rank_frequency(corpus)?;
        summary.rank_frequency = Some(RankFrequencyStats {
            corpus: path.display().to_string(),
            n_types: entries.len(),
            n_tokens: corpus.n_tokens(),
            fit: rank_frequency_slope(&entries).ok(),
            tail: tail_slope(&entries).ok(),
        });
        let pts = entries.iter().map(|e| (e.rank as u64, e.count)).collect();
        figures.push(("rank_frequency", plot::rank_frequency("token rank vs frequency", vec![(String::new(), pts)])));
    }
    for (stem, fig) in &figures {
        plot::write_figure(fig, out_dir, stem)?;
        summary.files.push(format!("{stem}.svg"));
        summary.files.push(format!("{stem}.csv"));
    }
    summary.files.push(SUMMARY_FILE.into());
    let path: PathBuf = out_dir.join(SUMMARY_FILE);
    let text = serde_json::to_string_pretty(&summary).map_err(|e| Error::Invalid(e.to_string()))? + "\n";
    fs::write(&path, text).map_err(io_err(&path))?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(index: u64, value: f64, status: TrialStatus, h: f64, acc: f64) -> TrialRecord {
        TrialRecord {
            index,
            params: [
                ("vocab_size".to_string(), ParamValue::Int(2 + index as i64)),
                ("cell".into(), ParamValue::Str(if index.is_multiple_of(2) { "gru" } else { "lstm" }.into())),
            ]
            .into_iter()
            .collect(),
            internal: BTreeMap::new(),
            value,
            status,
            wall_clock_secs: None,
            entropy_bits: Some(h),
            accuracy: Some(acc),
            per_target: vec![value + 0.1, 2.0 * value],
            corpus_path: None,
            checkpoint_path: None,
            error: None,
        }
    }

    #[test]
    fn two_trials_are_enough_but_flagged() {
        let log = vec![
            rec(0, 3.0, TrialStatus::Ok, 1.0, 0.5),
            rec(1, 2.0, TrialStatus::Ok, 2.0, 0.9),
            rec(2, 9.0, TrialStatus::Failed, 0.1, 0.1),
        ];
        let s = summarize(&log).unwrap();
        assert!(s.low_sample);
        assert_eq!((s.counts.total, s.counts.ok, s.counts.failed), (3, 2, 1));
        assert_eq!(s.correlations.entropy_score.n, 2);
        assert!((s.correlations.entropy_score.r.unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(s.best.index, 1);
        assert_eq!(s.pareto.front, vec![0, 1]);
        assert!(s.per_target.iter().all(|t| t.fit.is_none()));
    }

    #[test]
    fn one_ok_trial_is_insufficient() {
        let log = vec![rec(0, 3.0, TrialStatus::Ok, 1.0, 0.5), rec(1, 3.0, TrialStatus::Pruned, 0.0, 0.2)];
        assert!(summarize(&log).is_err());
    }

    #[test]
    fn slices_skip_constant_parameters() {
        let mut log: Vec<TrialRecord> = (0..4).map(|i| rec(i, i as f64, TrialStatus::Ok, 1.0, 0.5)).collect();
        for r in &mut log {
            r.params.insert("n_epochs".into(), ParamValue::Int(3));
        }
        let fig = slices(&log);
        let titles: Vec<&str> = fig.panels.iter().map(|p| p.title.as_str()).collect();
        assert_eq!(titles, ["cell", "vocab_size"]);
        assert_eq!(fig.panels[0].x_ticks.len(), 2);
        assert!(fig.panels[1].log_x);
    }
}
