use std::path::Path;
use std::process::Command;

fn mrtrack(args: &[&str], dir: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_mrtrack"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

const SMALL: &[&str] = &[
    "--n-robots",
    "3",
    "--steps",
    "5",
    "--burn-in",
    "1",
    "--trials",
    "2",
    "--mcts-iterations",
    "20",
    "--samples",
    "4",
    "--reference-samples",
    "8",
    "--capacity-samples",
    "4",
];

#[test]
fn run_verify_replay_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec![
        "run",
        "--method",
        "rsp:2",
        "--record-every",
        "2",
        "--output",
        "m.csv",
        "--records-dir",
        "recs",
    ];
    args.extend_from_slice(SMALL);
    let out = mrtrack(&args, dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(
        std::fs::read_to_string(dir.path().join("m.csv"))
            .unwrap()
            .lines()
            .count(),
        3
    );
    assert_eq!(std::fs::read_dir(dir.path().join("recs")).unwrap().count(), 6);

    let out = mrtrack(&["verify", "--records", "recs", "--capacity-samples", "4"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));

    let out = mrtrack(
        &[
            "replay",
            "--records",
            "recs",
            "--methods",
            "sequential,random",
            "--mcts-iterations",
            "20",
            "--output",
            "r.csv",
        ],
        dir.path(),
    );
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("6 subproblems, 0 flagged"));
}

#[test]
fn tampered_record_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec![
        "run",
        "--method",
        "rsp:2",
        "--record-every",
        "4",
        "--records-dir",
        "recs",
    ];
    args.extend_from_slice(SMALL);
    assert!(mrtrack(&args, dir.path()).status.success());
    let path = std::fs::read_dir(dir.path().join("recs"))
        .unwrap()
        .next()
        .unwrap()
        .unwrap()
        .path();
    let mut rec: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let mean = rec["logged_objective"]["mean"].as_f64().unwrap();
    rec["logged_objective"]["mean"] = (mean + 1.0).into();
    std::fs::write(&path, rec.to_string()).unwrap();
    let out = mrtrack(&["verify", "--records", "recs", "--capacity-samples", "4"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let out = mrtrack(&["replay", "--records", "recs", "--methods", "random"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn sweep_from_config_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("sweep.toml"),
        "n_robots_list = [2, 3]\nmethods = [\"sequential\", \"myopic\"]\nsteps = 4\nburn_in = 1\ntrials = 2\n\
mcts_iterations = 10\nsamples = 4\noutput = \"m.csv\"\n",
    )
    .unwrap();
    let out = mrtrack(&["sweep", "--config", "sweep.toml"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(
        std::fs::read_to_string(dir.path().join("m.csv"))
            .unwrap()
            .lines()
            .count(),
        9
    );
}

#[test]
fn bad_input_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        mrtrack(&["run", "--steps", "3", "--burn-in", "3"], dir.path())
            .status
            .code(),
        Some(2)
    );
    assert!(!mrtrack(&["run", "--method", "greedy"], dir.path()).status.success());
}
