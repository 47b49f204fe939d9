//! End-to-end runs of the `archetypal` binary: synth -> fit -> eval round
//! trips, exit-code contracts, config layering, and sweep determinism.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use archetypal_core::{load_matrix_csv, HullProjector};
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_archetypal"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn run_ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "expected success for {:?}\nstderr: {}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn json(path: &Path) -> Value {
    let text = fs::read_to_string(path).expect("json file");
    serde_json::from_str(&text).expect("valid json")
}

#[test]
fn synth_fit_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let synth_dir = dir.path().join("data");
    let fit_dir = dir.path().join("fit");
    let eval_dir = dir.path().join("eval");

    run_ok(&[
        "synth",
        "--generator",
        "toy",
        "--n",
        "150",
        "--seed",
        "7",
        "--out-dir",
        synth_dir.to_str().unwrap(),
    ]);
    for name in ["X.csv", "X0.csv", "W0.csv", "H0.csv", "meta.json"] {
        assert!(synth_dir.join(name).exists(), "missing {name}");
    }
    let meta = json(&synth_dir.join("meta.json"));
    assert_eq!(meta["generator"], "toy");
    assert_eq!(meta["n"], 150);
    assert_eq!(meta["d"], 2);
    assert_eq!(meta["sigma"], 0.0);

    run_ok(&[
        "fit",
        "--input",
        synth_dir.join("X.csv").to_str().unwrap(),
        "--r",
        "3",
        "--solver",
        "palm",
        "--init",
        "spa",
        "--max-iter",
        "400",
        "--out-dir",
        fit_dir.to_str().unwrap(),
    ]);
    let report = json(&fit_dir.join("report.json"));
    assert_eq!(report["solver"], "palm");
    assert_eq!(report["init"], "spa");
    assert_eq!(report["n"], 150);
    assert_eq!(report["d"], 2);
    assert!(report["iterations"].as_u64().unwrap() >= 1);
    let risk_initial = report["risk_initial"].as_f64().unwrap();
    let risk_final = report["risk_final"].as_f64().unwrap();
    assert!(risk_final <= risk_initial * (1.0 + 1e-12));

    run_ok(&[
        "eval",
        "--h0",
        synth_dir.join("H0.csv").to_str().unwrap(),
        "--h-hat",
        fit_dir.join("H_hat.csv").to_str().unwrap(),
        "--out-dir",
        eval_dir.to_str().unwrap(),
    ]);
    let metrics = json(&eval_dir.join("metrics.json"));
    let loss = metrics["loss"].as_f64().unwrap();
    let sqrt_loss = metrics["sqrt_loss"].as_f64().unwrap();
    assert!(loss.is_finite() && loss >= 0.0);
    assert!((sqrt_loss * sqrt_loss - loss).abs() <= 1e-12 * (1.0 + loss));
    assert_eq!(metrics["per_archetype"].as_array().unwrap().len(), 3);
}

#[test]
fn eval_scores_identity_permutation_and_offset() {
    let dir = tempfile::tempdir().unwrap();
    let h0 = dir.path().join("h0.csv");
    fs::write(&h0, "0,0\n1,0\n0.5,0.9\n").unwrap();

    // Identical estimate: zero loss.
    let same = dir.path().join("same");
    run_ok(&[
        "eval",
        "--h0",
        h0.to_str().unwrap(),
        "--h-hat",
        h0.to_str().unwrap(),
        "--out-dir",
        same.to_str().unwrap(),
    ]);
    assert_eq!(json(&same.join("metrics.json"))["loss"].as_f64().unwrap(), 0.0);

    // Row order is irrelevant: the loss matches nearest rows.
    let perm = dir.path().join("perm.csv");
    fs::write(&perm, "0.5,0.9\n0,0\n1,0\n").unwrap();
    let perm_dir = dir.path().join("perm");
    run_ok(&[
        "eval",
        "--h0",
        h0.to_str().unwrap(),
        "--h-hat",
        perm.to_str().unwrap(),
        "--out-dir",
        perm_dir.to_str().unwrap(),
    ]);
    assert_eq!(json(&perm_dir.join("metrics.json"))["loss"].as_f64().unwrap(), 0.0);

    // One coordinate off by 0.1: squared loss 0.01.
    let off = dir.path().join("off.csv");
    fs::write(&off, "0,0\n1,0\n0.5,1.0\n").unwrap();
    let off_dir = dir.path().join("off");
    run_ok(&[
        "eval",
        "--h0",
        h0.to_str().unwrap(),
        "--h-hat",
        off.to_str().unwrap(),
        "--out-dir",
        off_dir.to_str().unwrap(),
    ]);
    let loss = json(&off_dir.join("metrics.json"))["loss"].as_f64().unwrap();
    assert!((loss - 0.01).abs() <= 1e-12, "loss {loss}");
}

#[test]
fn unreadable_input_exits_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "fit",
        "--input",
        "/nonexistent/X.csv",
        "--r",
        "3",
        "--out-dir",
        dir.path().join("fit").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn ragged_csv_exits_with_code_2_and_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "1,2\n3,4,5\n").unwrap();
    let out = run(&[
        "fit",
        "--input",
        bad.to_str().unwrap(),
        "--r",
        "2",
        "--out-dir",
        dir.path().join("fit").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("line 2"), "stderr: {stderr}");
}

#[test]
fn missing_required_keys_exit_with_code_1() {
    let dir = tempfile::tempdir().unwrap();
    let x = dir.path().join("x.csv");
    fs::write(&x, "0,0\n1,0\n0,1\n").unwrap();

    let no_r = run(&[
        "fit",
        "--input",
        x.to_str().unwrap(),
        "--out-dir",
        dir.path().join("a").to_str().unwrap(),
    ]);
    assert_eq!(no_r.status.code(), Some(1));

    let no_input = run(&["fit", "--r", "2", "--out-dir", dir.path().join("b").to_str().unwrap()]);
    assert_eq!(no_input.status.code(), Some(1));
}

#[test]
fn toy_generator_rejects_noise() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "synth",
        "--generator",
        "toy",
        "--sigma",
        "0.001",
        "--out-dir",
        dir.path().join("s").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn flags_override_config_file_which_overrides_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("run.conf");
    fs::write(&conf, "# synth settings\ngenerator = separable\nn = 40\nd = 6\nr = 3\nsigma = 0\n")
        .unwrap();
    let out_dir = dir.path().join("out");
    run_ok(&[
        "synth",
        "--config",
        conf.to_str().unwrap(),
        "--n",
        "60",
        "--set",
        "dirichlet=2.5",
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    let meta = json(&out_dir.join("meta.json"));
    assert_eq!(meta["generator"], "separable");
    assert_eq!(meta["n"], 60, "flag wins over file");
    assert_eq!(meta["d"], 6, "file wins over default");
    assert_eq!(meta["sigma"], 0.0);
    assert_eq!(meta["config"]["dirichlet"], "2.5", "--set lands in the echo");
}

#[test]
fn constrained_fit_keeps_archetypes_inside_the_data_hull() {
    let dir = tempfile::tempdir().unwrap();
    let synth_dir = dir.path().join("data");
    let fit_dir = dir.path().join("fit");
    run_ok(&[
        "synth",
        "--generator",
        "toy",
        "--n",
        "100",
        "--seed",
        "3",
        "--out-dir",
        synth_dir.to_str().unwrap(),
    ]);
    run_ok(&[
        "fit",
        "--input",
        synth_dir.join("X.csv").to_str().unwrap(),
        "--r",
        "3",
        "--solver",
        "altmin-inf",
        "--max-iter",
        "300",
        "--out-dir",
        fit_dir.to_str().unwrap(),
    ]);
    let x = load_matrix_csv(&synth_dir.join("X.csv")).unwrap();
    let h = load_matrix_csv(&fit_dir.join("H_hat.csv")).unwrap();
    let hull = HullProjector::new(&x.values).unwrap();
    for l in 0..h.values.nrows() {
        let row = h.values.row(l).transpose();
        let proj = hull.project(&row, 1e-12, 20_000, None).unwrap();
        assert!(
            proj.sq_distance.max(0.0).sqrt() <= 1e-6,
            "row {l} sits {} outside the hull",
            proj.sq_distance.max(0.0).sqrt()
        );
    }
}

#[test]
fn sweep_writes_one_row_per_noise_level_and_reproduces_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &Path| {
        vec![
            "sweep".to_string(),
            "--generator".into(),
            "separable".into(),
            "--n".into(),
            "40".into(),
            "--d".into(),
            "8".into(),
            "--r".into(),
            "3".into(),
            "--sigma-grid".into(),
            "0,0.0005".into(),
            "--replicates".into(),
            "2".into(),
            "--seed".into(),
            "11".into(),
            "--lambda".into(),
            "1.0".into(),
            "--max-iter".into(),
            "200".into(),
            "--out-dir".into(),
            out.to_str().unwrap().into(),
        ]
    };
    let first = dir.path().join("one");
    let second = dir.path().join("two");
    for out in [&first, &second] {
        let argv = args(out);
        let argv: Vec<&str> = argv.iter().map(String::as_str).collect();
        run_ok(&argv);
    }
    let curve_a = fs::read(first.join("curve.csv")).unwrap();
    let curve_b = fs::read(second.join("curve.csv")).unwrap();
    assert_eq!(curve_a, curve_b, "identical config and seeds must reproduce bytes");

    let text = String::from_utf8(curve_a).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3, "header plus one row per noise level");
    assert!(lines[0].starts_with("sigma,mean_sqrt_loss,std_sqrt_loss"));

    let sweep = json(&first.join("sweep.json"));
    assert_eq!(sweep["failed_cells"], 0);
    assert_eq!(sweep["cells"].as_array().unwrap().len(), 4);
}

#[test]
fn alpha_emits_one_row_per_grid_point() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("alpha");
    run_ok(&[
        "alpha",
        "--grid",
        "0.45",
        "--restarts",
        "8",
        "--seed",
        "5",
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    let text = fs::read_to_string(out_dir.join("alpha_curve.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], "l,alpha_hat,search_evals,budget_exhausted");
    let fields: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(fields[0].parse::<f64>().unwrap(), 0.45);
    let alpha_hat = fields[1].parse::<f64>().unwrap();
    assert!((0.0..=1.0).contains(&alpha_hat), "alpha_hat {alpha_hat}");
    assert!(fields[3] == "0" || fields[3] == "1");
}
