mod common;

use std::process::Command;

use common::*;

fn run(dir: &std::path::Path, args: &[&str]) -> std::process::Output {
    Command::new(probe_bin()).current_dir(dir).args(args).output().unwrap()
}

fn code(out: &std::process::Output) -> i32 {
    out.status.code().unwrap()
}

#[test]
fn help_and_version_exit_zero() {
    let d = tempfile::tempdir().unwrap();
    for args in [&["--help"][..], &["--version"], &["run", "--help"]] {
        let out = run(d.path(), args);
        assert_eq!(code(&out), 0, "{args:?}");
        assert!(!out.stdout.is_empty());
    }
}

#[test]
fn usage_errors_exit_one() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(d.path(), &[])), 1);
    assert_eq!(code(&run(d.path(), &["frobnicate"])), 1);
    assert_eq!(code(&run(d.path(), &["score"])), 1);
    assert_eq!(code(&run(d.path(), &["associate", "--journal", "j", "--corpus", "c", "--direction", "up", "--out", "o"])), 1);
}

#[test]
fn missing_inputs_exit_one() {
    let d = tempfile::tempdir().unwrap();
    let out = run(d.path(), &["score", "--journal", "absent.jsonl", "--out", "s.csv"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent.jsonl"));
    assert_eq!(code(&run(d.path(), &["ingest", "--in", "absent.jsonl", "--out", "x.jsonl"])), 1);
}

#[test]
fn unwritable_output_exits_two() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("spec.toml"), PLANTED_SPEC).unwrap();
    std::fs::write(d.path().join("blocker"), "").unwrap();
    let out = run(d.path(), &["synth", "--spec", "spec.toml", "--n", "5", "--seed", "1", "--out", "blocker/corpus.jsonl"]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn interrupted_run_exits_one_and_resumes() {
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().unwrap();
    let rule = sdoh_probe::synth::MockRule::from_toml(WORKERS_RULE).unwrap();
    let (addr, _server) = rt.block_on(sdoh_probe::synth::spawn_mock(rule)).unwrap();
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    std::fs::write(p.join("spec.toml"), PLANTED_SPEC).unwrap();
    std::fs::write(p.join("campaign.toml"), campaign_toml(&format!("http://{addr}"), &["m"], 1, 3)).unwrap();
    probe(p, &["synth", "--spec", "spec.toml", "--n", "40", "--seed", "2", "--out", "corpus.jsonl"]);
    probe(p, &["ingest", "--in", "corpus.jsonl", "--out", "neutral.jsonl"]);
    let args = ["run", "--campaign", "campaign.toml", "--corpus", "neutral.jsonl", "--out", "j.jsonl"];
    let mut stopped = args.to_vec();
    stopped.extend(["--stop-after", "10"]);
    assert_eq!(code(&run(p, &stopped)), 0);
    let dead = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap();
    std::fs::write(p.join("dead.toml"), campaign_toml(&format!("http://{dead}"), &["m"], 1, 3).replace("max_attempts = 3", "max_attempts = 1")).unwrap();
    let out = run(p, &["run", "--campaign", "dead.toml", "--corpus", "neutral.jsonl", "--out", "j.jsonl"]);
    assert_eq!(code(&out), 1, "{}", String::from_utf8_lossy(&out.stderr));
    probe(p, &args);
    let lines = std::fs::read_to_string(p.join("j.jsonl")).unwrap().lines().count();
    let records = std::fs::read_to_string(p.join("neutral.jsonl")).unwrap().lines().count();
    assert_eq!(lines, records);
}

#[test]
fn ingest_writes_quarantine_file() {
    let d = tempfile::tempdir().unwrap();
    let input = fixture("leak_corpus.jsonl");
    probe(d.path(), &["ingest", "--in", input.to_str().unwrap(), "--out", "neutral.jsonl"]);
    let rejected = std::fs::read_to_string(d.path().join("neutral.jsonl.rejected.jsonl")).unwrap();
    assert_eq!(rejected.lines().count(), 10);
}
