use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use adnlf::model::import_model;
use adnlf::synthetic::{planted, PlantedConfig};
use tempfile::TempDir;

fn adnlf() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_adnlf"));
    cmd.env_remove("ADNLF_OUT_DIR").env("RUST_LOG", "warn");
    cmd
}

fn run(args: &[&str]) -> Output {
    adnlf().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Planted synthetic ratings as CSV, shifted so some values are negative.
fn write_planted(dir: &Path, shift: f64) -> PathBuf {
    let data = planted(&PlantedConfig::default()).unwrap();
    let text: String = data
        .triples
        .iter()
        .map(|t| format!("{},{},{}\n", t.row, t.col, t.value + shift))
        .collect();
    let path = dir.join("ratings.csv");
    fs::write(&path, text).unwrap();
    path
}

fn report_value(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("{key} missing from {text}"))
        .parse()
        .unwrap()
}

fn manual_args<'a>(input: &'a str, out: &'a str) -> Vec<&'a str> {
    vec![
        "train", input, "--mode", "manual", "--alpha", "1", "--beta", "1", "--eta", "0.0625",
        "--lambda", "0.0078125", "--f", "5", "--max-iters", "60", "--out", out,
    ]
}

#[test]
fn split_writes_seventy_ten_twenty() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("small.csv");
    let text: String = (0..100).map(|i| format!("u{},i{},{}\n", i % 13, i % 17, 1 + i % 5)).collect();
    fs::write(&input, text).unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = run(&["split", s(&input), "--seed", "9", "--out", s(out)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    for (name, n) in [("train.csv", 70), ("validation.csv", 10), ("test.csv", 20)] {
        let text = fs::read_to_string(a.join(name)).unwrap();
        assert_eq!(text.lines().count(), n, "{name}");
        assert_eq!(text, fs::read_to_string(b.join(name)).unwrap());
    }
    let manifest = fs::read_to_string(a.join("manifest.csv")).unwrap();
    assert_eq!(manifest.lines().count(), 101);
    assert_eq!(fs::read_to_string(a.join("scaling.txt")).unwrap(), "offset=0\nscale=1\n");
}

#[test]
fn split_records_the_shift_and_keeps_raw_values() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("jester.csv");
    let text: String = (0..40).map(|i| format!("{i},{},{}\n", i % 9, -10 + (i % 21))).collect();
    fs::write(&input, text).unwrap();
    let out = dir.path().join("s");
    assert_eq!(code(&run(&["split", s(&input), "--out", s(&out)])), 0);
    assert_eq!(fs::read_to_string(out.join("scaling.txt")).unwrap(), "offset=-10.5\nscale=1\n");
    let all: String = ["train.csv", "validation.csv", "test.csv"]
        .iter()
        .map(|f| fs::read_to_string(out.join(f)).unwrap())
        .collect();
    assert!(all.lines().any(|l| l.ends_with(",-10")));
}

#[test]
fn missing_input_fails_with_diagnostic() {
    let dir = TempDir::new().unwrap();
    let o = run(&["split", s(&dir.path().join("absent.csv")), "--out", s(dir.path())]);
    assert_eq!(code(&o), 1);
    assert!(!o.stderr.is_empty());
}

#[test]
fn manual_train_writes_artifacts() {
    let dir = TempDir::new().unwrap();
    let input = write_planted(dir.path(), 0.0);
    let out = dir.path().join("m");
    let o = run(&manual_args(s(&input), s(&out)));
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report = fs::read_to_string(out.join("report.txt")).unwrap();
    assert_eq!(report, stdout(&o));
    for key in ["test_rmse", "validation_rmse", "iterations", "seconds_per_iteration", "total_seconds"] {
        assert!(report_value(&report, key).is_finite());
    }
    assert!(report.contains("mode=manual\n"));
    assert_eq!(report_value(&report, "alpha"), 1.0);
    let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
    assert!(trace.starts_with("epoch,mean_train_loss,validation_rmse,seconds\n"));
    assert_eq!(trace.lines().count() - 1, report_value(&report, "iterations") as usize);
    let model = import_model(fs::File::open(out.join("model.bin")).unwrap()).unwrap();
    assert_eq!((model.state.n_rows(), model.state.n_cols(), model.state.rank()), (200, 100, 5));
}

#[test]
fn manual_mode_requires_every_hyperparameter() {
    let dir = TempDir::new().unwrap();
    let input = write_planted(dir.path(), 0.0);
    let o = run(&["train", s(&input), "--mode", "manual", "--alpha", "1", "--out", s(dir.path())]);
    assert_eq!(code(&o), 2);
}

#[test]
fn adaptive_rejects_eta_outside_search_box() {
    let dir = TempDir::new().unwrap();
    let input = write_planted(dir.path(), 0.0);
    let o = run(&["train", s(&input), "--eta", "0.2", "--out", s(dir.path())]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("eta"));
}

#[test]
fn unknown_flag_is_a_config_error() {
    assert_eq!(code(&run(&["train", "x.csv", "--speed", "3"])), 2);
}

#[test]
fn adaptive_train_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let input = write_planted(dir.path(), 0.0);
    let mut outputs = Vec::new();
    for (name, threads) in [("a", "1"), ("b", "3")] {
        let out = dir.path().join(name);
        let o = run(&[
            "train", s(&input), "--f", "5", "--max-iters", "15", "--seed", "4", "--threads",
            threads, "--out", s(&out),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        assert_eq!(report_value(&stdout(&o), "iterations"), 15.0);
        outputs.push(out);
    }
    for file in ["trace.csv", "model.bin", "model.bin.index"] {
        let a = fs::read(outputs[0].join(file)).unwrap();
        let b = fs::read(outputs[1].join(file)).unwrap();
        assert_eq!(a, b, "{file} differs");
    }
}

#[test]
fn config_file_with_flag_override() {
    let dir = TempDir::new().unwrap();
    let input = write_planted(dir.path(), 0.0);
    let cfg = dir.path().join("run.conf");
    fs::write(
        &cfg,
        "# manual baseline\nmode = manual\nalpha = 1\nbeta = 1\neta = 0.0625\nlambda = 0.0078125\nf = 3\nmax-iters = 5\n",
    )
    .unwrap();
    let out = dir.path().join("c");
    let o = run(&["train", s(&input), "--config", s(&cfg), "--f", "2", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let model = import_model(fs::File::open(out.join("model.bin")).unwrap()).unwrap();
    assert_eq!(model.state.rank(), 2);
    assert_eq!(report_value(&stdout(&o), "iterations"), 5.0);

    fs::write(&cfg, "colour = blue\n").unwrap();
    assert_eq!(code(&run(&["train", s(&input), "--config", s(&cfg)])), 2);
}

#[test]
fn output_directory_from_environment() {
    let dir = TempDir::new().unwrap();
    let input = write_planted(dir.path(), 0.0);
    let env_out = dir.path().join("from-env");
    let o = adnlf()
        .args(["split", s(&input)])
        .env("ADNLF_OUT_DIR", &env_out)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert!(env_out.join("train.csv").exists());
}

#[test]
fn numeric_abort_exits_three() {
    let dir = TempDir::new().unwrap();
    let input = write_planted(dir.path(), 0.0);
    let mut text = fs::read_to_string(&input).unwrap();
    // absurd ratings on fresh rows overflow the α = 1.5 gradient
    for i in 0..30 {
        text.push_str(&format!("{},{i},1e300\n", 200 + i));
    }
    fs::write(&input, text).unwrap();
    let o = run(&[
        "train", s(&input), "--mode", "manual", "--alpha", "1.5", "--beta", "1", "--eta", "0.01",
        "--lambda", "0", "--f", "5", "--max-iters", "3", "--out", s(dir.path()),
    ]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("numeric abort"));
}

struct Trained {
    dir: TempDir,
    model: PathBuf,
    input: PathBuf,
}

fn trained_model(shift: f64) -> Trained {
    let dir = TempDir::new().unwrap();
    let input = write_planted(dir.path(), shift);
    let out = dir.path().join("m");
    let o = run(&manual_args(s(&input), s(&out)));
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    Trained {
        model: out.join("model.bin"),
        input,
        dir,
    }
}

fn index_mean(model: &Path) -> f64 {
    let text = fs::read_to_string(format!("{}.index", model.display())).unwrap();
    text.lines()
        .find_map(|l| l.strip_prefix("train_mean\t"))
        .unwrap()
        .parse()
        .unwrap()
}

#[test]
fn predict_known_and_unknown_pairs() {
    // shifted below zero so predictions pass through the inverse scaling
    let t = trained_model(-1.0);
    let pairs = t.dir.path().join("pairs.csv");
    fs::write(&pairs, "0,17\n199,5\nghost,5\n").unwrap();

    let o = run(&["predict", "--model", s(&t.model), s(&pairs)]);
    assert_eq!(code(&o), 4);
    let lines: Vec<String> = stdout(&o).lines().map(str::to_owned).collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[2], "ghost,5,ERROR unknown row id");
    let model = import_model(fs::File::open(&t.model).unwrap()).unwrap();
    let lo = model.scaling.to_raw(0.0);
    let hi = model.scaling.to_raw(model.state.rank() as f64);
    for line in &lines[..2] {
        let v: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!(v.is_finite() && v >= lo && v <= hi, "{line}");
    }

    let o = run(&["predict", "--model", s(&t.model), s(&pairs), "--fallback", "mean"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    let ghost: f64 = text.lines().nth(2).unwrap().rsplit(',').next().unwrap().parse().unwrap();
    assert_eq!(ghost, index_mean(&t.model));
    assert_eq!(text.lines().take(2).collect::<Vec<_>>(), lines[..2].iter().map(String::as_str).collect::<Vec<_>>());

    let file = t.dir.path().join("pred.csv");
    let o = run(&["predict", "--model", s(&t.model), s(&pairs), "--fallback", "mean", "--output", s(&file)]);
    assert_eq!(code(&o), 0);
    assert_eq!(fs::read_to_string(file).unwrap(), text);
}

#[test]
fn evaluate_is_finite_and_idempotent() {
    let t = trained_model(0.0);
    let first = run(&["evaluate", "--model", s(&t.model), s(&t.input)]);
    assert_eq!(code(&first), 0, "{}", String::from_utf8_lossy(&first.stderr));
    let rmse = report_value(&stdout(&first), "rmse");
    assert!(rmse.is_finite() && rmse >= 0.0);
    assert_eq!(report_value(&stdout(&first), "n"), 1600.0);
    let second = run(&["evaluate", "--model", s(&t.model), s(&t.input)]);
    assert_eq!(stdout(&first), stdout(&second));

    let empty = t.dir.path().join("empty.csv");
    fs::write(&empty, "").unwrap();
    let o = run(&["evaluate", "--model", s(&t.model), s(&empty)]);
    assert_ne!(code(&o), 0);
}

#[test]
fn evaluate_unknown_ids_follow_fallback() {
    let t = trained_model(0.0);
    let extra = t.dir.path().join("extra.csv");
    fs::write(&extra, "0,17,1.0\nstranger,3,2.0\n").unwrap();
    assert_eq!(code(&run(&["evaluate", "--model", s(&t.model), s(&extra)])), 4);
    let o = run(&["evaluate", "--model", s(&t.model), s(&extra), "--fallback", "mean"]);
    assert_eq!(code(&o), 0);
    assert_eq!(report_value(&stdout(&o), "fallback_predictions"), 1.0);
}

#[test]
fn corrupt_model_is_rejected() {
    let t = trained_model(0.0);
    let bytes = fs::read(&t.model).unwrap();
    fs::write(&t.model, &bytes[..bytes.len() - 3]).unwrap();
    let o = run(&["evaluate", "--model", s(&t.model), s(&t.input)]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("truncated"));
}

#[test]
fn sweep_tabulates_grid() {
    let dir = TempDir::new().unwrap();
    let input = write_planted(dir.path(), 0.0);
    let out = dir.path().join("w");
    let o = run(&[
        "sweep", s(&input), "--eta", "0.0625", "--lambda", "0.0078125", "--f", "5", "--max-iters",
        "20", "--alphas", "0.5,1", "--betas", "1,1.5", "--out", s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(text, stdout(&o));
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "alpha\\beta,1,1.5");
    assert!(lines[1].starts_with("0.5,") && lines[2].starts_with("1,"));
    assert!(lines[3].starts_with("# best alpha="));
    assert!(lines[3].contains("gap_vs_euclidean="));

    let o = run(&["sweep", s(&input), "--eta", "0.0625", "--out", s(&out)]);
    assert_eq!(code(&o), 2);
}
