use std::process::Command;

fn adlmh(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_adlmh")).args(args).output().unwrap()
}

#[test]
fn unknown_program_is_a_config_error() {
    let out = adlmh(&["run", "--program", "nope", "--algorithm", "lmh"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_checkpoints_are_a_config_error() {
    let out = adlmh(&["run", "--program", "hmm", "--algorithm", "lmh", "--samples", "10", "--checkpoints", "20"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("checkpoint"));
}

#[test]
fn missing_reference_file_is_a_runtime_error() {
    let out = adlmh(&["run", "--program", "gp", "--algorithm", "lmh", "--reference", "/nonexistent/ref.csv"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn run_writes_metric_and_stats_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = adlmh(&[
        "run", "--program", "hmm", "--algorithm", "adlmh", "--samples", "500", "--restarts", "2",
        "--checkpoints", "100,500", "--out", dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("hmm_adlmh.csv")).unwrap();
    let lines: Vec<_> = csv.lines().collect();
    assert_eq!(lines[0], "algorithm,restart,iteration,metric,value");
    assert_eq!(lines.len(), 1 + 2 * 2);
    assert!(lines[1].starts_with("adlmh,0,100,kl,"));
    let stats = std::fs::read_to_string(dir.path().join("hmm_adlmh_stats_1.csv")).unwrap();
    assert!(stats.starts_with("iteration,address,reward,count,accepts,rejects\n"));
    assert!(dir.path().join("hmm_adlmh_summary.csv").exists());
}

#[test]
fn equilibrium_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = adlmh(&["equilibrium", "--grid", "11", "--beta1", "0.5", "--beta2", "0.5,1", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success());
    let b = std::fs::read_to_string(dir.path().join("b.csv")).unwrap();
    assert_eq!(b.lines().count(), 12);
    let fp = std::fs::read_to_string(dir.path().join("fixed_point.csv")).unwrap();
    assert_eq!(fp.lines().count(), 3);
    let bad = adlmh(&["equilibrium", "--beta1", "1.5"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn oracle_prints_marginals() {
    let out = adlmh(&["oracle"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 19);
    for line in text.lines().skip(1) {
        let s: f64 = line.split(',').skip(1).map(|x| x.parse::<f64>().unwrap()).sum();
        assert!((s - 1.0).abs() < 1e-12);
    }
}

#[test]
fn reference_round_trips_through_run() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ref.csv");
    let p = path.to_str().unwrap();
    let out = adlmh(&["reference", "--restarts", "2", "--steps", "300", "--tail", "100", "--thin", "10", "--out", p]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = adlmh(&[
        "run", "--program", "gp", "--algorithm", "lmh", "--samples", "200", "--restarts", "1",
        "--reference", p, "--out", dir.path().to_str().unwrap(),
    ]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert!(std::fs::read_to_string(dir.path().join("gp_lmh.csv")).unwrap().contains(",ks,"));
}
