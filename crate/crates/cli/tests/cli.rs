use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const MANIFEST: &str = r#"{
    "name": "tiny",
    "kernel": {"kind": "mala", "step_size": 0.01,
               "energy": {"kind": "gaussian-mixture-2d", "num_components": 2, "half_width": 3.0,
                          "component_sigma": 0.3, "min_separation": 4.0, "seed": 1}},
    "ground_truth": "nearest-mean",
    "nbi": {"horizon": 50, "trajectories_per_candidate": 24, "min_eval_pairs": 40,
            "train_pairs": 200, "validation_pairs": 60,
            "architecture": {"trunk_hidden": [16], "embedding": 8, "head_hidden": [8]},
            "train": {"epochs": 3, "batch_size": 32},
            "discovery": {"num_chains": 4, "horizon": 400,
                          "init": {"kind": "uniform-box", "half_width": 3.0}}},
    "num_repeats": 2,
    "seed": 5
}"#;

fn basins(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_basins"))
        .args(args)
        .env_remove("NBI_WORKERS")
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Writes the tiny manifest and runs it into `out`.
fn run_tiny(dir: &Path, out: &Path) -> Output {
    let manifest = dir.join("tiny.json");
    fs::write(&manifest, MANIFEST).unwrap();
    basins(&["run", path(&manifest), "--output", path(out)])
}

fn repeat_dir(out: &Path) -> PathBuf {
    out.join("tiny").join("repeat-00")
}

#[test]
fn run_writes_identical_results_for_the_same_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let first = run_tiny(tmp.path(), &a);
    assert_eq!(first.status.code(), Some(0), "{}", String::from_utf8_lossy(&first.stderr));
    let stdout = String::from_utf8_lossy(&first.stdout);
    assert!(stdout.contains("ARI"), "{stdout}");
    assert_eq!(run_tiny(tmp.path(), &b).status.code(), Some(0));
    let ra = fs::read(a.join("tiny/results.json")).unwrap();
    let rb = fs::read(b.join("tiny/results.json")).unwrap();
    assert_eq!(ra, rb);
    for f in ["partition.json", "classifier.ckpt", "endpoints.csv"] {
        assert!(repeat_dir(&a).join(f).is_file(), "missing {f}");
    }
}

#[test]
fn indicate_and_dump_plot_use_a_saved_repeat() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    assert_eq!(run_tiny(tmp.path(), &out).status.code(), Some(0));
    let rep = repeat_dir(&out);

    let points = tmp.path().join("points.csv");
    fs::write(&points, "x0,x1\n1.0,2.0\n-1.0,0.5\n").unwrap();
    let o = basins(&["indicate", path(&rep), path(&points), "--seed", "3"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "point,basin");
    assert_eq!(lines.len(), 3);
    // Same seed, same answer; the checkpoint path works like the directory.
    let again = basins(&["indicate", path(&rep.join("classifier.ckpt")), path(&points), "--seed", "3"]);
    assert_eq!(String::from_utf8(again.stdout).unwrap(), text);

    let empty = tmp.path().join("empty.csv");
    fs::write(&empty, "").unwrap();
    let o = basins(&["indicate", path(&rep), path(&empty)]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(String::from_utf8(o.stdout).unwrap(), "point,basin\n");

    let wrong = tmp.path().join("wrong.csv");
    fs::write(&wrong, "1.0,2.0\n\n0.0,1.0,2.0\n").unwrap();
    let o = basins(&["indicate", path(&rep), path(&wrong)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("wrong.csv:3:"), "{}", String::from_utf8_lossy(&o.stderr));

    let plot = tmp.path().join("plot.csv");
    let o = basins(&["dump-plot", path(&rep), "--trajectories", "1", "--stride", "25", "--output", path(&plot)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(&plot).unwrap();
    let mut rows = csv.lines();
    assert_eq!(
        rows.next().unwrap(),
        "trajectory_id,candidate,step,coord_0,coord_1,predicted_label,true_label"
    );
    for row in rows {
        assert_eq!(row.split(',').count(), 7, "{row}");
    }
}

#[test]
fn invalid_manifest_exits_with_validation_code() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.json");
    fs::write(&bad, MANIFEST.replace("\"horizon\": 50", "\"horizon\": 50, \"merge_threshold\": 0.7")).unwrap();
    let o = basins(&["run", path(&bad), "--output", path(tmp.path())]);
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));

    let unknown = tmp.path().join("unknown.json");
    fs::write(&unknown, MANIFEST.replace("\"seed\": 5", "\"seed\": 5, \"colour\": 1")).unwrap();
    assert_eq!(basins(&["run", path(&unknown)]).status.code(), Some(1));

    assert_eq!(basins(&["run", path(&tmp.path().join("missing.json"))]).status.code(), Some(1));
}

#[test]
fn unmet_expectation_exits_with_code_three() {
    let tmp = tempfile::tempdir().unwrap();
    let m = tmp.path().join("strict.json");
    fs::write(
        &m,
        MANIFEST.replace("\"seed\": 5", "\"seed\": 5, \"expectation\": {\"exact_basins\": {\"count\": 9, \"min_repeats\": 1}}"),
    )
    .unwrap();
    let o = basins(&["run", path(&m), "--repeats", "1", "--output", path(tmp.path())]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stdout));
    assert!(String::from_utf8_lossy(&o.stdout).contains("unmet"));
}

#[test]
fn bad_worker_count_is_rejected() {
    let o = Command::new(env!("CARGO_BIN_EXE_basins"))
        .args(["verify-theorem", "nothing.json"])
        .env("NBI_WORKERS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn chain_verification_reports_bounds() {
    let tmp = tempfile::tempdir().unwrap();
    let chain = tmp.path().join("chain.json");
    fs::write(
        &chain,
        r#"{"transition": [[0.9, 0.1, 0.0, 0.0], [0.1, 0.9, 0.0, 0.0], [0.0, 0.0, 0.8, 0.2], [0.0, 0.0, 0.2, 0.8]],
            "wells": [[0, 1], [2, 3]], "cores": [[0, 1], [2, 3]], "t_star": 5}"#,
    )
    .unwrap();
    let o = basins(&["verify-theorem", path(&chain), "--horizon", "20"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["violations"], 0);

    // Missing horizon.
    assert_eq!(basins(&["verify-theorem", path(&chain)]).status.code(), Some(1));

    let bad = tmp.path().join("bad.json");
    fs::write(&bad, r#"{"transition": [[0.5, 0.4]], "wells": [[0]], "cores": [[0]]}"#).unwrap();
    assert_eq!(basins(&["verify-theorem", path(&bad), "--t-star", "1", "--horizon", "2"]).status.code(), Some(1));
}
