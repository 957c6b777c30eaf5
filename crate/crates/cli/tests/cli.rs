use std::path::Path;
use std::process::Command;

use coop_pliable::simgen::{generate, preset};
use coop_pliable_cli::artifact::ModelFile;
use coop_pliable_cli::commands::load_simulated;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_coopliable"))
}

fn run(cmd: &mut Command) -> String {
    let out = cmd.output().expect("spawn");
    assert!(
        out.status.success(),
        "command failed: {}\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn simulate(dir: &Path, preset_name: &str, seed: u64) -> String {
    run(bin().args(["simulate", "--preset", preset_name, "--n", "60", "--p", "12", "--n-test", "40", "--seed"])
        .arg(seed.to_string())
        .arg("--out")
        .arg(dir))
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap()
}

#[test]
fn simulate_is_byte_identical_per_seed() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    let out = simulate(a.path(), "lowdim-1", 7);
    assert!(out.contains("realized SNR 5.000000"), "{out}");
    simulate(b.path(), "lowdim-1", 7);
    simulate(c.path(), "lowdim-1", 8);
    for f in ["train/x1.csv", "train/x2.csv", "train/z.csv", "train/y.csv", "test/y.csv", "truth.json"] {
        assert_eq!(read(&a.path().join(f)), read(&b.path().join(f)), "{f}");
    }
    assert_ne!(read(&a.path().join("train/y.csv")), read(&c.path().join("train/y.csv")));
}

#[test]
fn full_size_preset_dimensions() {
    let dir = tempfile::tempdir().unwrap();
    run(bin().args(["simulate", "--preset", "lowdim-1", "--seed", "7", "--out"]).arg(dir.path()));
    let lines = |f: &str| std::fs::read_to_string(dir.path().join(f)).unwrap().lines().count() - 1;
    assert_eq!(lines("train/y.csv"), 500);
    assert_eq!(lines("test/y.csv"), 9800);
    let header = std::fs::read_to_string(dir.path().join("train/x1.csv")).unwrap();
    assert_eq!(header.lines().next().unwrap().split(',').count(), 100);
}

#[test]
fn highdim_truth_has_both_supports() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "highdim-3", 1);
    let truth: serde_json::Value = serde_json::from_slice(&read(&dir.path().join("truth.json"))).unwrap();
    assert!(!truth["main_support1"].as_array().unwrap().is_empty());
    assert!(!truth["main_support2"].as_array().unwrap().is_empty());
}

#[test]
fn simulated_files_ingest_to_generated_data() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "lowdim-2", 3);
    let (train, test) = load_simulated(dir.path()).unwrap();
    let scenario = preset("lowdim-2").unwrap().scaled(60, 12, 40).with_seed(3);
    let sim = generate(&scenario).unwrap();
    assert_eq!(train, sim.train);
    assert_eq!(test, sim.test);
}

fn fit(data: &Path, out: &Path, extra: &[&str]) -> String {
    run(bin()
        .args(["fit", "--data"])
        .arg(data)
        .arg("--out")
        .arg(out)
        .args(["--n-lambda", "15", "--seed", "4"])
        .args(extra))
}

#[test]
fn model_round_trip_reproduces_prediction_hash() {
    let data = tempfile::tempdir().unwrap();
    simulate(data.path(), "lowdim-1", 2);
    for method in ["coop", "late", "adaptive-coop"] {
        let out = tempfile::tempdir().unwrap();
        fit(data.path(), out.path(), &["--method", method, "--rho-grid", "0..2"]);
        let model = ModelFile::load(&out.path().join("model.json")).unwrap();
        let printed = run(bin()
            .args(["predict", "--model"])
            .arg(out.path().join("model.json"))
            .arg("--data")
            .arg(data.path().join("train")));
        assert!(printed.contains(&model.train_prediction_sha256), "{method}: {printed}");
        let metrics: serde_json::Value = serde_json::from_slice(&read(&out.path().join("metrics.json"))).unwrap();
        assert!(metrics["test_mse"].as_f64().unwrap() > 0.0);
        if method != "late" {
            let rho = metrics["selected_rho"].as_f64().unwrap();
            assert!((0.0..=2.0).contains(&rho));
        }
    }
}

#[test]
fn early_and_rho_zero_coop_write_identical_coefficients() {
    let data = tempfile::tempdir().unwrap();
    simulate(data.path(), "lowdim-1", 5);
    let early = tempfile::tempdir().unwrap();
    let coop = tempfile::tempdir().unwrap();
    fit(data.path(), early.path(), &["--method", "early"]);
    fit(data.path(), coop.path(), &["--method", "coop", "--rho-grid", "0"]);
    assert_eq!(
        read(&early.path().join("coefficients.json")),
        read(&coop.path().join("coefficients.json"))
    );
}

#[test]
fn categorical_modifiers_and_located_errors() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let n = 30;
    let mut x1 = String::from("a,b\n");
    let mut x2 = String::from("c\n");
    let mut z = String::from("time\n");
    let mut y = String::from("y\n");
    for i in 0..n {
        let (a, b, c) = ((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos(), (i as f64 * 0.7).sin());
        let t = 1 + i % 3;
        x1.push_str(&format!("{a},{b}\n"));
        x2.push_str(&format!("{c}\n"));
        z.push_str(&format!("{t}\n"));
        y.push_str(&format!("{}\n", 2.0 * a + (t as f64) * b - c));
    }
    for (f, text) in [("x1.csv", &x1), ("x2.csv", &x2), ("z.csv", &z), ("y.csv", &y)] {
        std::fs::write(d.join(f), text).unwrap();
    }
    let out = tempfile::tempdir().unwrap();
    fit(d, out.path(), &["--method", "early", "--categorical", "time"]);
    let model = ModelFile::load(&out.path().join("model.json")).unwrap();
    assert_eq!(model.coefficients.theta1[0].len(), 3);
    let out_ref = tempfile::tempdir().unwrap();
    fit(d, out_ref.path(), &["--method", "early", "--categorical", "time", "--reference-coding"]);
    let model = ModelFile::load(&out_ref.path().join("model.json")).unwrap();
    assert_eq!(model.coefficients.theta1[0].len(), 2);

    // a missing cell names file, row and column
    let mut lines: Vec<String> = x1.lines().map(String::from).collect();
    lines[4] = format!("{},", lines[4].split(',').next().unwrap());
    std::fs::write(d.join("x1.csv"), lines.join("\n") + "\n").unwrap();
    let res = bin()
        .args(["fit", "--method", "early", "--data"])
        .arg(d)
        .arg("--out")
        .arg(out.path())
        .output()
        .unwrap();
    assert!(!res.status.success());
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("x1.csv") && err.contains("row 4") && err.contains("column 'b'"), "{err}");
}

#[test]
fn bench_writes_tables_and_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for (dir, workers) in [(a.path(), "1"), (b.path(), "2")] {
        run(bin()
            .args([
                "bench", "--preset", "lowdim-1", "--n", "50", "--p", "12", "--n-test", "30", "--methods", "all",
                "--replicates", "2", "--n-lambda", "10", "--rho-grid", "0..2", "--seed", "1", "--out",
            ])
            .arg(dir)
            .env("COOPLIABLE_WORKERS", workers));
    }
    for f in ["results.json", "table.tsv", "rho_hist.tsv", "selection.tsv"] {
        assert_eq!(read(&a.path().join(f)), read(&b.path().join(f)), "{f}");
    }
    let table = std::fs::read_to_string(a.path().join("table.tsv")).unwrap();
    assert_eq!(table.lines().count(), 7);
    let selection = std::fs::read_to_string(a.path().join("selection.tsv")).unwrap();
    // three cutoffs per method
    assert_eq!(selection.lines().count(), 1 + 6 * 3);
    for method in ["coop", "early"] {
        let spec: Vec<f64> = selection
            .lines()
            .skip(1)
            .filter(|l| l.split('\t').nth(1) == Some(method))
            .map(|l| l.split('\t').nth(9).unwrap().parse().unwrap())
            .collect();
        assert!(spec.windows(2).all(|w| w[1] >= w[0]));
        assert_eq!(*spec.last().unwrap(), 1.0);
    }
}

#[test]
fn single_replicate_has_zero_sd() {
    let dir = tempfile::tempdir().unwrap();
    run(bin()
        .args([
            "bench", "--preset", "lowdim-3", "--n", "40", "--p", "12", "--n-test", "20", "--methods", "early,only-x1",
            "--replicates", "1", "--n-lambda", "8", "--out",
        ])
        .arg(dir.path()));
    let table = std::fs::read_to_string(dir.path().join("table.tsv")).unwrap();
    for line in table.lines().skip(1) {
        assert_eq!(line.split('\t').nth(4), Some("0"));
    }
}

#[test]
fn bad_worker_count_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "lowdim-1", 1);
    let res = bin()
        .args(["fit", "--method", "early", "--data"])
        .arg(dir.path())
        .arg("--out")
        .arg(dir.path().join("o"))
        .env("COOPLIABLE_WORKERS", "zero")
        .output()
        .unwrap();
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("COOPLIABLE_WORKERS"));
}
