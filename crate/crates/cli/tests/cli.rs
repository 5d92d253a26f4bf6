//! End-to-end command tests: every subcommand drives the real binary on a
//! temporary workspace, and repeated runs with the same seed and
//! configuration must produce identical files.

use std::path::{Path, PathBuf};
use std::process::Command;

fn binary() -> PathBuf {
    // target/debug/blocksampler next to the test executable's directory.
    let mut path = std::env::current_exe().unwrap();
    path.pop();
    path.pop();
    path.join(format!("blocksampler{}", std::env::consts::EXE_SUFFIX))
}

fn workdir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("blocksampler-cli-tests").join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str], cwd: &Path) -> (bool, String) {
    let out = Command::new(binary())
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("spawn blocksampler");
    let text = format!(
        "{}{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    (out.status.success(), text)
}

#[test]
fn generate_fit_summarize_roundtrip() {
    let dir = workdir("roundtrip");
    let (ok, out) =
        run(&["generate", "--scenario", "2", "--n", "45", "--seed", "3", "--out-prefix", "net"], &dir);
    assert!(ok, "{out}");
    assert!(dir.join("net_adjacency.csv").exists());
    assert!(dir.join("net_truth.csv").exists());

    let (ok, out) = run(
        &[
            "fit", "--model", "zinb", "--adjacency", "net_adjacency.csv", "--iterations",
            "500", "--burn-in", "250", "--seed", "9", "--out", "chain.jsonl",
        ],
        &dir,
    );
    assert!(ok, "{out}");
    assert!(out.contains("kept 250 draws"), "{out}");

    let (ok, out) = run(
        &[
            "summarize", "--chain", "chain.jsonl", "--truth", "net_truth.csv",
            "--out-prefix", "sum",
        ],
        &dir,
    );
    assert!(ok, "{out}");
    assert!(dir.join("sum_partition.csv").exists());
    let summary = std::fs::read_to_string(dir.join("sum_summary.txt")).unwrap();
    assert!(summary.contains("estimated communities"), "{summary}");
}

#[test]
fn unknown_scenario_fails_with_nonzero_exit() {
    let dir = workdir("badscenario");
    let (ok, out) =
        run(&["generate", "--scenario", "3", "--n", "20", "--out-prefix", "x"], &dir);
    assert!(!ok);
    assert!(out.contains("unknown scenario"), "{out}");
}

#[test]
fn fit_requires_covariates_for_covariate_model() {
    let dir = workdir("needcov");
    let (ok, _) =
        run(&["generate", "--scenario", "2", "--n", "20", "--seed", "1", "--out-prefix", "n"], &dir);
    assert!(ok);
    let (ok, out) = run(
        &[
            "fit", "--model", "czinb", "--adjacency", "n_adjacency.csv", "--iterations",
            "20", "--burn-in", "10", "--out", "c.jsonl",
        ],
        &dir,
    );
    assert!(!ok);
    assert!(out.contains("covariates required"), "{out}");
}

#[test]
fn dry_run_validates_without_sampling() {
    let dir = workdir("dryrun");
    run(&["generate", "--scenario", "1", "--n", "25", "--seed", "2", "--out-prefix", "n"], &dir);
    let (ok, out) = run(
        &[
            "fit", "--model", "zip", "--adjacency", "n_adjacency.csv", "--dry-run",
            "--out", "c.jsonl",
        ],
        &dir,
    );
    assert!(ok, "{out}");
    assert!(out.contains("configuration OK"), "{out}");
    assert!(!dir.join("c.jsonl").exists());

    // Invalid schedule rejected.
    let (ok, out) = run(
        &[
            "fit", "--model", "zip", "--adjacency", "n_adjacency.csv", "--iterations",
            "10", "--burn-in", "20", "--dry-run", "--out", "c.jsonl",
        ],
        &dir,
    );
    assert!(!ok);
    assert!(out.contains("must exceed burn-in"), "{out}");
}

#[test]
fn config_file_is_applied_and_overridden_by_flags() {
    let dir = workdir("config");
    run(&["generate", "--scenario", "2", "--n", "30", "--seed", "5", "--out-prefix", "n"], &dir);
    std::fs::write(
        dir.join("run.conf"),
        "model = zip\niterations = 300\nburn_in = 150\nseed = 4\n# comment\n",
    )
    .unwrap();
    let (ok, out) = run(
        &[
            "fit", "--config", "run.conf", "--adjacency", "n_adjacency.csv", "--out",
            "c1.jsonl",
        ],
        &dir,
    );
    assert!(ok, "{out}");
    assert!(out.contains("kept 150 draws"), "{out}");

    // Flag override of the config file's iteration count.
    let (ok, out) = run(
        &[
            "fit", "--config", "run.conf", "--adjacency", "n_adjacency.csv",
            "--iterations", "400", "--burn-in", "200", "--out", "c2.jsonl",
        ],
        &dir,
    );
    assert!(ok, "{out}");
    assert!(out.contains("kept 200 draws"), "{out}");

    let (ok, out) = run(
        &["fit", "--config", "missing.conf", "--adjacency", "n_adjacency.csv", "--out", "c3.jsonl"],
        &dir,
    );
    assert!(!ok);
    assert!(out.contains("missing.conf"), "{out}");
}

#[test]
fn repeated_runs_are_bitwise_identical() {
    let dir = workdir("determinism");
    run(&["generate", "--scenario", "2", "--n", "35", "--seed", "8", "--out-prefix", "n"], &dir);
    for out in ["a.jsonl", "b.jsonl"] {
        let (ok, text) = run(
            &[
                "fit", "--model", "zinb", "--adjacency", "n_adjacency.csv",
                "--iterations", "400", "--burn-in", "200", "--seed", "21", "--out", out,
            ],
            &dir,
        );
        assert!(ok, "{text}");
    }
    let a = std::fs::read(dir.join("a.jsonl")).unwrap();
    let b = std::fs::read(dir.join("b.jsonl")).unwrap();
    assert_eq!(a, b, "chain files must be bitwise identical");

    // Regenerating the data with the same seed gives identical files too.
    run(&["generate", "--scenario", "2", "--n", "35", "--seed", "8", "--out-prefix", "m"], &dir);
    let n1 = std::fs::read(dir.join("n_adjacency.csv")).unwrap();
    let m1 = std::fs::read(dir.join("m_adjacency.csv")).unwrap();
    assert_eq!(n1, m1);
}

#[test]
fn predict_scores_masked_pairs() {
    let dir = workdir("predict");
    run(&["generate", "--scenario", "2", "--n", "40", "--seed", "6", "--out-prefix", "n"], &dir);

    // Build a mask of the first three nonzero pairs and the matching train file.
    let full = std::fs::read_to_string(dir.join("n_adjacency.csv")).unwrap();
    let rows: Vec<&str> = full.lines().skip(1).collect();
    let masked: Vec<&str> = rows.iter().take(3).copied().collect();
    let mut mask_csv = String::from("i,j,original\n");
    for row in &masked {
        mask_csv.push_str(row);
        mask_csv.push('\n');
    }
    std::fs::write(dir.join("mask.csv"), mask_csv).unwrap();
    let mut train_csv = String::from("i,j,w\n");
    for row in rows.iter().skip(3) {
        train_csv.push_str(row);
        train_csv.push('\n');
    }
    std::fs::write(dir.join("train.csv"), train_csv).unwrap();

    let (ok, out) = run(
        &[
            "fit", "--model", "zinb", "--adjacency", "train.csv", "--nodes", "40",
            "--iterations", "400", "--burn-in", "200", "--seed", "2", "--out", "c.jsonl",
        ],
        &dir,
    );
    assert!(ok, "{out}");
    let (ok, out) = run(
        &[
            "predict", "--chain", "c.jsonl", "--adjacency", "n_adjacency.csv", "--mask",
            "mask.csv", "--out", "scores.csv",
        ],
        &dir,
    );
    assert!(ok, "{out}");
    assert!(out.contains("AUC"), "{out}");
    let scores = std::fs::read_to_string(dir.join("scores.csv")).unwrap();
    assert!(scores.starts_with("i,j,prob_nonzero,expected_weight,held_out_positive"));
}

#[test]
fn reproduce_commands_run_at_toy_scale() {
    let dir = workdir("reproduce");
    let (ok, out) = run(
        &[
            "reproduce-sim", "--nodes", "40", "--replications", "2", "--iterations",
            "500", "--seed", "11", "--out-dir", "sim",
        ],
        &dir,
    );
    assert!(ok, "{out}");
    assert!(out.contains("ZINB-SBM"), "{out}");
    assert!(dir.join("sim/sim_report.txt").exists());
    assert!(dir.join("sim/sim_replications.csv").exists());

    let (ok, out) = run(
        &[
            "reproduce-linkpred", "--replications", "2", "--iterations", "300", "--seed",
            "13", "--out-dir", "lp",
        ],
        &dir,
    );
    assert!(ok, "{out}");
    assert!(out.contains("CZINB-SBM"), "{out}");
    assert!(dir.join("lp/linkpred_report.txt").exists());
}
