use std::fs;
use std::path::Path;

use quenchnet::calibration::{build_calibration, CalibrationTable};
use quenchnet::cli::raw::{normalize, read_raw};
use quenchnet::fixture;

fn shipped(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

#[test]
fn shipped_files_match_generator() {
    let dir = tempfile::tempdir().unwrap();
    let calib = dir.path().join("c.json");
    fixture::calibration().save(&calib).unwrap();
    assert_eq!(
        fs::read(&calib).unwrap(),
        fs::read(shipped("calibration_45c.json")).unwrap()
    );
    let rows = read_raw(&shipped("raw_phase_45c.csv")).unwrap();
    assert_eq!(rows.len(), fixture::raw_rows().len());
    for (row, (hz, t, c, tan)) in rows.iter().zip(fixture::raw_rows()) {
        assert_eq!(
            (row.frequency_hz, row.temperature_c, row.o2_percent_air),
            (hz, t, c)
        );
        assert!((row.tan_theta - tan).abs() <= 1e-15 * tan);
    }
}

#[test]
fn calibration_from_raw_recovers_fixture_parameters() {
    let bundles = normalize(&read_raw(&shipped("raw_phase_45c.csv")).unwrap()).unwrap();
    assert_eq!(bundles.len(), 1);
    let table = build_calibration(&bundles[0].to_curves().unwrap()).unwrap();
    assert!(table.all_converged());
    for knot in table.knots() {
        let truth = fixture::params_at_hz(knot.omega.hz());
        let p = knot.params;
        let rel = |a: f64, b: f64| (a - b).abs() / b;
        assert!(rel(p.f(), truth.f()) < 1e-5, "{p:?} vs {truth:?}");
        assert!(rel(p.ksv1(), truth.ksv1()) < 1e-5, "{p:?} vs {truth:?}");
        assert!(rel(p.ksv2(), truth.ksv2()) < 1e-5, "{p:?} vs {truth:?}");
    }
    let loaded = CalibrationTable::load(&shipped("calibration_45c.json")).unwrap();
    assert_eq!(loaded.knots().len(), table.knots().len());
}
