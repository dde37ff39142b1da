mod common;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use trendforge::datastore::{Corpus, FollowerGraph, RankBucket, TrendingInterval, TrendingTimeline, TweetRecord};
use trendforge::tpr::TrigramEmbedder;

use common::tweet;

fn trendforge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trendforge"))
        .args(args)
        .env_remove("TRENDFORGE_JOBS")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(args: &[&str]) {
    let o = trendforge(args);
    assert!(o.status.success(), "{args:?} failed: {}", stderr(&o));
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(p: PathBuf) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn coef(fit: &Value, term: &str) -> (f64, f64) {
    let c = fit["coefficients"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["term"] == term)
        .unwrap();
    (c["estimate"].as_f64().unwrap(), c["se"].as_f64().unwrap())
}

fn write_corpus(dir: &Path, tweets: Vec<TweetRecord>, edges: &[(u64, u64)], timelines: Vec<TrendingTimeline>, embed: bool) {
    let embeddings = embed.then(|| {
        TrigramEmbedder::default()
            .embed_all(tweets.iter().map(|t| (t.tweet_id, t.text.as_str())))
            .0
    });
    let timelines = timelines.into_iter().map(|t| (t.hashtag.clone(), t)).collect();
    Corpus::assemble(tweets, FollowerGraph::from_edges(edges.iter().copied()), timelines, embeddings)
        .unwrap()
        .write_dir(dir)
        .unwrap();
}

fn on(hashtag: &str, mut t: TweetRecord) -> TweetRecord {
    t.hashtag = hashtag.into();
    t
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(trendforge(&["--help"]).status.code(), Some(0));
    assert_eq!(trendforge(&["--version"]).status.code(), Some(0));
    assert_eq!(trendforge(&["fit", "--help"]).status.code(), Some(0));
}

#[test]
fn usage_errors_exit_one_with_code_line() {
    for args in [vec!["frobnicate"], vec!["fit"], vec!["fit", "--in", "x", "--strategy", "nope"]] {
        let o = trendforge(&args);
        assert_eq!(o.status.code(), Some(1), "{args:?}");
        assert!(stderr(&o).starts_with("error_code="), "{args:?}: {}", stderr(&o));
    }
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"unknown_field": true}"#).unwrap();
    let o = trendforge(&["--config", path(&cfg), "validate", "--in", "x"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error_code=InvalidConfig\n"));
}

#[test]
fn missing_input_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = trendforge(&["validate", "--in", path(&dir.path().join("absent"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error_code=MissingInput\n"));
    let o = trendforge(&["report", "--in", path(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn small_hashtag_fails_tpr_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let tweets: Vec<TweetRecord> = (0..100u64)
        .map(|i| {
            let mut t = on("tiny", tweet(i + 1, i, 1000 + i as i64, None, i % 4 == 0));
            t.text = format!("#tiny word{i} other{}", i * 7);
            t
        })
        .collect();
    write_corpus(dir.path(), tweets, &[], vec![], true);
    let o = trendforge(&["tpr", "--in", path(dir.path()), "--min-unique", "3000"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.starts_with("error_code=HashtagTooSmall\n"), "{err}");
    assert!(err.contains("HashtagTooSmall: 100 unique tweets"), "{err}");
    ok(&["tpr", "--in", path(dir.path()), "--min-unique", "50"]);
    assert!(dir.path().join("tpr.csv").exists());
}

#[test]
fn all_zero_hashtag_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let onset = 1_000_000;
    let bin = 300;
    let mut tweets = Vec::new();
    let mut edges = Vec::new();
    let mut id = 1;
    let mut user = 10;
    let mut timelines = Vec::new();
    for (h, name) in ["a", "b", "c"].into_iter().enumerate() {
        timelines.push(
            TrendingTimeline::new(
                name,
                vec![TrendingInterval {
                    start_ts: onset,
                    end_ts: onset + 4 * bin,
                    bucket: RankBucket::Top50,
                }],
                0,
            )
            .unwrap(),
        );
        let seed_user = user;
        user += 1;
        tweets.push(on(name, tweet(id, seed_user, onset - 10 * bin, None, true)));
        id += 1;
        for k in -4i64..4 {
            let n = if name == "c" { 1 + (k + 4) % 3 } else { 1 + (h as i64 * 7 + k * 3).rem_euclid(5) };
            for j in 0..n {
                if name == "c" {
                    edges.push((user, seed_user));
                }
                tweets.push(on(name, tweet(id, user, onset + k * bin + j * 10, None, false)));
                id += 1;
                user += 1;
            }
        }
    }
    write_corpus(dir.path(), tweets, &edges, timelines, false);
    let o = trendforge(&["fit", "--in", path(dir.path()), "--window-min", "-4", "--window-max", "3"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).starts_with("error_code=SeparationSuspected\n"), "{}", stderr(&o));
    assert!(dir.path().join("panel.csv").exists());
}

#[test]
fn fit_recovers_simulated_effect() {
    let dir = tempfile::tempdir().unwrap();
    let d = path(dir.path());
    ok(&["simulate", "--seed", "7", "--lambda-true", "0.693", "--out", d]);
    ok(&["fit", "--in", d, "--strategy", "earliest"]);
    let (lambda, se) = coef(&read_json(dir.path().join("fit.json")), "lambda");
    assert!((lambda - 0.693).abs() < 3.0 * se, "lambda {lambda} se {se}");
}

#[test]
fn donut_hole_equals_earliest_without_uncertainty() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().join("data");
    let (e, h) = (dir.path().join("earliest"), dir.path().join("donut"));
    ok(&["simulate", "--preset", "recovery", "--seed", "4", "--uncertainty", "0", "--out", path(&d)]);
    ok(&["fit", "--in", path(&d), "--out", path(&e), "--strategy", "earliest"]);
    ok(&["fit", "--in", path(&d), "--out", path(&h), "--strategy", "donut-hole"]);
    let (fe, fh) = (read_json(e.join("fit.json")), read_json(h.join("fit.json")));
    assert_eq!(fe["coefficients"], fh["coefficients"]);
    assert_eq!(fe["cov_cluster"], fh["cov_cluster"]);
    assert_eq!(
        std::fs::read(e.join("panel.csv")).unwrap(),
        std::fs::read(h.join("panel.csv")).unwrap()
    );
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().join("data");
    ok(&["simulate", "--preset", "recovery", "--seed", "5", "--uncertainty", "3600", "--out", path(&d)]);
    let cfg = dir.path().join("run.json");
    std::fs::write(
        &cfg,
        format!(
            r#"{{"input": "{}", "out": "{}", "model": {{"strategy": "donut-hole"}}}}"#,
            path(&d),
            path(&dir.path().join("from_config"))
        ),
    )
    .unwrap();
    ok(&["--config", path(&cfg), "fit"]);
    let from_config = read_json(dir.path().join("from_config/fit.json"));
    assert_eq!(from_config["spec"]["strategy"], "donut-hole");
    let flagged = dir.path().join("flagged");
    ok(&["--config", path(&cfg), "fit", "--strategy", "earliest", "--out", path(&flagged)]);
    assert_eq!(read_json(flagged.join("fit.json"))["spec"]["strategy"], "earliest");
}

fn pipeline(dir: &Path, jobs: &str) -> BTreeMap<String, Vec<u8>> {
    let d = path(dir);
    ok(&["--jobs", jobs, "simulate", "--seed", "11", "--n-users", "2000", "--n-hashtags", "6", "--out", d]);
    ok(&["--jobs", jobs, "validate", "--in", d]);
    ok(&["--jobs", jobs, "cascade", "--in", d]);
    ok(&["--jobs", jobs, "exposure", "--in", d, "--permutations", "200"]);
    ok(&["--jobs", jobs, "tpr", "--in", d, "--min-unique", "100"]);
    ok(&["--jobs", jobs, "fit", "--in", d]);
    ok(&["--jobs", jobs, "report", "--in", d]);
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().into_string().unwrap(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}

#[test]
fn pipeline_is_byte_identical_across_runs_and_thread_counts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let first = pipeline(a.path(), "1");
    let second = pipeline(b.path(), "4");
    assert!(first.len() >= 25, "{:?}", first.keys().collect::<Vec<_>>());
    assert_eq!(first.keys().collect::<Vec<_>>(), second.keys().collect::<Vec<_>>());
    for (name, bytes) in &first {
        assert!(bytes == &second[name], "{name} differs");
    }
    let report = read_json(a.path().join("report.json"));
    assert_eq!(report["figures"].as_array().unwrap().len(), 5);
}
