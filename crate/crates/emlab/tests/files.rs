use std::fs;
use std::path::Path;

use emlab::config::{load_game_config, load_toml, ObjectiveConfig, SearchConfig};
use emlab::corpus_io::{format_corpus, parse_corpus, read_corpus, write_corpus};
use emlab::plot;
use emlab_core::corpus::Corpus;
use proptest::prelude::*;

proptest! {
    #[test]
    fn corpus_files_round_trip(utts in prop::collection::vec(prop::collection::vec(any::<u32>(), 1..12), 0..40)) {
        let corpus = if utts.is_empty() { Corpus::default() } else { Corpus::new(utts).unwrap() };
        let text = format_corpus(&corpus);
        prop_assert!(!text.contains('\r') && !text.contains("  ") && !text.contains(" \n"));
        let back = parse_corpus(&text).unwrap();
        prop_assert_eq!(back.utterances(), corpus.utterances());
        prop_assert_eq!(format_corpus(&back), text);
    }

    #[test]
    fn plot_sidecars_round_trip(
        pts in prop::collection::vec((-1e6f64..1e6, 1e-9f64..1e9), 0..30),
        log_y in any::<bool>(),
    ) {
        let series = vec![plot::Series::xy("a, \"quoted\"", plot::Mark::Point, pts.iter().copied())];
        let mut fig = plot::scatter("t", "x", "y", series, "n");
        fig.panels[0].log_y = log_y;
        let back = plot::from_csv(&plot::to_csv(&fig)).unwrap();
        prop_assert_eq!(plot::render_svg(&back), plot::render_svg(&fig));
        prop_assert_eq!(back, fig);
    }
}

#[test]
fn corpus_files_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.txt");
    let corpus = Corpus::new(vec![vec![0, 17], vec![4_294_967_295]]).unwrap();
    write_corpus(&corpus, &path).unwrap();
    assert_eq!(fs::read_to_string(&path).unwrap(), "0 17\n4294967295\n");
    assert_eq!(read_corpus(&path).unwrap().utterances(), corpus.utterances());
    fs::write(&path, "1 2\n3 x\n").unwrap();
    let err = read_corpus(&path).unwrap_err().to_string();
    assert!(err.contains(":2") || err.contains("line 2"), "{err}");
}

#[test]
fn shipped_presets_load() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_str().unwrap().to_owned();
        if name.starts_with("search") || name == "toy.toml" {
            SearchConfig::load(&path).unwrap_or_else(|e| panic!("{name}: {e}"));
        } else if name.starts_with("game") {
            load_game_config(&path).unwrap_or_else(|e| panic!("{name}: {e}"));
        } else if name.starts_with("eval") {
            let cfg: ObjectiveConfig = load_toml(&path).unwrap();
            cfg.validate().unwrap();
        } else {
            continue;
        }
        n += 1;
    }
    assert!(n >= 9, "{n} presets");
}
