use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use quenchnet::calibration::CurveBundle;
use quenchnet::fixture;
use quenchnet::quench::{phase_ratio_r, Concentration};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn qn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_quenchnet"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_on_every_command() {
    for cmd in [
        "ingest",
        "calibrate",
        "generate",
        "train",
        "evaluate",
        "sweep",
        "predict",
    ] {
        let out = qn(&[cmd, "--help"]);
        assert_eq!(out.status.code(), Some(0), "{cmd}");
        assert!(
            String::from_utf8_lossy(&out.stdout).contains("Usage: quenchnet"),
            "{cmd}"
        );
    }
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = qn(&["generate", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_file_exits_2_with_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.csv");
    let out = qn(&["ingest", s(&missing), "--out-dir", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains(s(&missing)));
    let out = qn(&[
        "calibrate",
        s(&missing),
        "--out",
        s(&dir.path().join("c.json")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("nope.csv"));
}

#[test]
fn randomized_commands_need_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let calib = fixtures().join("calibration_45c.json");
    let out = qn(&["generate", s(&calib), "--out", s(&dir.path().join("d.csv"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("seed"));
}

#[test]
fn ingest_reproduces_model_ratios() {
    let dir = tempfile::tempdir().unwrap();
    let out = qn(&[
        "ingest",
        s(&fixtures().join("raw_phase_45c.csv")),
        "--out-dir",
        s(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let bundle = CurveBundle::load(&dir.path().join("curves_45C.json")).unwrap();
    assert_eq!(bundle.curves.len(), 16);
    for curve in &bundle.curves {
        let p = fixture::params_at_hz(curve.frequency_hz);
        for (&c, &r) in curve.o2_percent_air.iter().zip(&curve.r) {
            let expected = phase_ratio_r(&p, Concentration::new(c).unwrap());
            assert!(
                (r - expected).abs() <= 1e-12,
                "{} Hz, {c}: {r} vs {expected}",
                curve.frequency_hz
            );
        }
    }
}

#[test]
fn ingest_without_reference_names_frequency() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw.csv");
    fs::write(
        &raw,
        "frequency_hz,temperature_c,o2_percent_air,tan_theta\n\
         1000,45,0,0.5\n1000,45,50,0.25\n6000,45,20,0.3\n6000,45,50,0.2\n",
    )
    .unwrap();
    let out = qn(&["ingest", s(&raw), "--out-dir", s(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(
        stderr(&out).contains("no reference for 6000 Hz"),
        "{}",
        stderr(&out)
    );
}

#[test]
fn config_file_rejects_unknown_keys_and_supplies_seed() {
    let dir = tempfile::tempdir().unwrap();
    let calib = fixtures().join("calibration_45c.json");
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"seed": 1, "generate": {"sample": 10}}"#).unwrap();
    let out = qn(&[
        "generate",
        s(&calib),
        "--out",
        s(&dir.path().join("a.csv")),
        "--config",
        s(&bad),
    ]);
    assert_eq!(out.status.code(), Some(2));

    let good = dir.path().join("good.json");
    fs::write(&good, r#"{"seed": 1, "generate": {"samples": 10}}"#).unwrap();
    let a = dir.path().join("a.csv");
    let out = qn(&["generate", s(&calib), "--out", s(&a), "--config", s(&good)]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert_eq!(fs::read_to_string(&a).unwrap().lines().count(), 11);

    // flags beat the file
    let out = qn(&[
        "generate",
        s(&calib),
        "--out",
        s(&a),
        "--config",
        s(&good),
        "--samples",
        "4",
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(fs::read_to_string(&a).unwrap().lines().count(), 5);
}

#[test]
fn train_evaluate_predict() {
    let dir = tempfile::tempdir().unwrap();
    let d = |name: &str| dir.path().join(name);
    let calib = fixtures().join("calibration_45c.json");
    let run = |args: &[&str]| {
        let out = qn(args);
        assert_eq!(out.status.code(), Some(0), "{args:?}: {}", stderr(&out));
        String::from_utf8(out.stdout).unwrap()
    };
    run(&[
        "generate",
        s(&calib),
        "--out",
        s(&d("data.csv")),
        "--seed",
        "3",
        "--samples",
        "300",
    ]);
    run(&[
        "generate",
        s(&calib),
        "--out",
        s(&d("test.csv")),
        "--seed",
        "3",
        "--mismatch",
    ]);
    let printed = run(&[
        "train",
        s(&d("data.csv")),
        "--out",
        s(&d("model.json")),
        "--layers",
        "2",
        "--neurons",
        "5",
        "--epochs",
        "300",
        "--seed",
        "9",
        "--trace",
        s(&d("trace.csv")),
    ]);
    assert!(printed.contains("MAE_train") && printed.contains("MAE_dev"));
    assert!(fs::read_to_string(d("trace.csv"))
        .unwrap()
        .starts_with("epoch,cost\n0,"));

    let summary = run(&[
        "evaluate",
        "--model",
        s(&d("model.json")),
        s(&d("test.csv")),
        "--out-dir",
        s(&d("eval")),
    ]);
    assert!(summary.contains("observations 10"));
    let ae = fs::read_to_string(d("eval/ae.csv")).unwrap();
    assert_eq!(ae.lines().count(), 11);
    let profile = fs::read_to_string(d("eval/profile.csv")).unwrap();
    assert!(profile.starts_with("bin_lo,bin_hi,count,mean_ae,median_ae,max_ae\n"));

    let ratios = vec!["0.5"; 16].join(",");
    let one = run(&["predict", "--model", s(&d("model.json")), &ratios]);
    let y: f64 = one.trim().parse().unwrap();
    assert!(y > 0.0 && y < 110.0);
    let many = run(&[
        "predict",
        "--model",
        s(&d("model.json")),
        "--csv",
        s(&d("test.csv")),
    ]);
    assert_eq!(many.lines().count(), 10);

    let out = qn(&["predict", "--model", s(&d("model.json")), "0.5,0.5"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sweep_report_independent_of_workers() {
    let dir = tempfile::tempdir().unwrap();
    let d = |name: &str| dir.path().join(name);
    let calib = fixtures().join("calibration_45c.json");
    assert!(qn(&[
        "generate",
        s(&calib),
        "--out",
        s(&d("data.csv")),
        "--seed",
        "1",
        "--samples",
        "200"
    ])
    .status
    .success());
    let sweep = |workers: &str, out: &Path| {
        let o = qn(&[
            "sweep",
            s(&d("data.csv")),
            "--out",
            s(out),
            "--seed",
            "5",
            "--epochs",
            "40",
            "--layer-counts",
            "1,2",
            "--neuron-counts",
            "3,4",
            "--workers",
            workers,
            "--omit-timing",
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    };
    sweep("1", &d("a.csv"));
    sweep("4", &d("b.csv"));
    let a = fs::read(d("a.csv")).unwrap();
    assert_eq!(a, fs::read(d("b.csv")).unwrap());
    assert_eq!(String::from_utf8(a).unwrap().lines().count(), 5);
}
