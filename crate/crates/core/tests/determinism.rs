mod common;

use common::*;
use sdoh_probe::synth::{spawn_mock, MockRule};

#[test]
fn repeated_pipelines_are_byte_identical() {
    println!("{}", check_determinism().unwrap());
}

#[test]
fn reports_are_byte_identical() {
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().unwrap();
    let (addr, _server) = rt.block_on(spawn_mock(MockRule::from_toml(WORKERS_RULE).unwrap())).unwrap();
    let url = format!("http://{addr}/v1");
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut figures = Vec::new();
    for d in &dirs {
        cli_pipeline(d.path(), &url);
        probe(d.path(), &["report", "--scores", "scores.csv", "--assoc", "assoc.csv", "--out-dir", "fig"]);
        let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(d.path().join("fig"))
            .unwrap()
            .map(|e| e.unwrap())
            .map(|e| (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap()))
            .collect();
        files.sort();
        figures.push(files);
    }
    let names: Vec<&str> = figures[0].iter().map(|(n, _)| n.as_str()).collect();
    for expected in ["scores.svg", "distribution.svg", "assoc-male.svg", "assoc-female.svg"] {
        assert!(names.contains(&expected), "{names:?}");
    }
    assert_eq!(figures[0], figures[1]);
}

#[test]
fn different_campaign_seed_changes_predictions() {
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().unwrap();
    let (addr, _server) = rt.block_on(spawn_mock(MockRule::from_toml(WORKERS_RULE).unwrap())).unwrap();
    let d = tempfile::tempdir().unwrap();
    let (scores, _) = cli_pipeline(d.path(), &format!("http://{addr}/v1"));
    let toml = std::fs::read_to_string(d.path().join("campaign.toml")).unwrap().replace("seed = 77", "seed = 78");
    std::fs::write(d.path().join("campaign.toml"), toml).unwrap();
    probe(d.path(), &["run", "--campaign", "campaign.toml", "--corpus", "neutral.jsonl", "--out", "journal2.jsonl"]);
    probe(d.path(), &["score", "--journal", "journal2.jsonl", "--out", "scores2.csv"]);
    assert_ne!(scores, std::fs::read(d.path().join("scores2.csv")).unwrap());
}
