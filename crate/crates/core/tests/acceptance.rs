//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits nonzero
//! if any criterion fails.
//!
//! The full-length (10⁵ epoch) accuracy run takes about 17 minutes on one
//! core; set `QUENCHNET_SKIP_PAPER_SCALE=1` to leave it out.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use quenchnet::calibration::{default_init, fit_two_site, CalibrationTable, QuenchCurve};
use quenchnet::dataset::{self, read_dataset, write_dataset, Dataset, MismatchSpec};
use quenchnet::evaluation::{self, ae_per_observation, SweepGrid, SweepReport};
use quenchnet::network::{self, NetworkModel, NetworkSpec, TrainConfig};
use quenchnet::quench::{
    phase_ratio_r, two_site_intensity_ratio, Concentration, ModulationFrequency, Temperature,
    TwoSiteParams,
};
use quenchnet::spline::CubicSpline;
use quenchnet::{fixture, rng};

const DATA_SEED: u64 = 2024;
const SWEEP_SEED: u64 = 7;

struct Outcome {
    id: &'static str,
    pass: bool,
    detail: String,
    seconds: f64,
}

fn timed(id: &'static str, f: impl FnOnce() -> (bool, String)) -> Outcome {
    let t = Instant::now();
    let (pass, detail) = f();
    let o = Outcome {
        id,
        pass,
        detail,
        seconds: t.elapsed().as_secs_f64(),
    };
    report(&o);
    o
}

fn report(o: &Outcome) {
    println!(
        "criterion {:<10} {}  {} ({:.1} s)",
        o.id,
        if o.pass { "PASS" } else { "FAIL" },
        o.detail,
        o.seconds
    );
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

fn gradient_correctness() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let grid = SweepGrid::default();
    let mut worst: f64 = 0.0;
    for (l, n) in grid.cells() {
        let spec = NetworkSpec::new(16, l, n).unwrap();
        let mut model = NetworkModel::init(spec, rng.random()).unwrap();
        model
            .params_mut()
            .for_each(|p| *p += rng.random_range(-0.2..0.2));
        let rows: Vec<f64> = (0..8 * 16).map(|_| rng.random_range(0.2..1.0)).collect();
        let x = ndarray::Array2::from_shape_vec((8, 16), rows).unwrap();
        let y = ndarray::Array1::from_iter((0..8).map(|_| rng.random_range(0.0..110.0)));
        worst = worst.max(network::gradient_check(&model, x.view(), &y, 1e-6));
    }
    (
        worst <= 1e-6,
        format!("max relative error {worst:.2e} over 18 architectures (limit 1e-6)"),
    )
}

fn fit_round_trip() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let t = Temperature::new(45.0).unwrap();
    let w = ModulationFrequency::from_hz(6000.0).unwrap();
    let trials = 100;
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let truth = TwoSiteParams::new(
            rng.random_range(0.6..=0.95),
            rng.random_range(0.01..=0.1),
            rng.random_range(0.0005..=0.01),
        )
        .unwrap()
        .canonical();
        let pts = fixture::CONCENTRATIONS
            .iter()
            .map(|&c| {
                let c = Concentration::new(c).unwrap();
                (c, phase_ratio_r(&truth, c))
            })
            .collect();
        let curve = QuenchCurve::new(w, t, pts).unwrap();
        let fit = fit_two_site(&curve, &default_init(&curve).unwrap()).unwrap();
        let p = fit.params;
        worst = worst
            .max(rel(p.f(), truth.f()))
            .max(rel(p.ksv1(), truth.ksv1()))
            .max(rel(p.ksv2(), truth.ksv2()));
    }
    (
        worst <= 1e-5,
        format!("max relative parameter error {worst:.2e} over {trials} truths (limit 1e-5)"),
    )
}

fn spline_correctness() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut knot_err: f64 = 0.0;
    let mut linear_err: f64 = 0.0;
    for _ in 0..200 {
        let n = rng.random_range(3..20);
        let mut xs: Vec<f64> = vec![rng.random_range(-10.0..10.0)];
        for _ in 1..n {
            xs.push(xs.last().unwrap() + rng.random_range(0.1..3.0));
        }
        let ys: Vec<f64> = xs.iter().map(|_| rng.random_range(-5.0..5.0)).collect();
        let s = CubicSpline::new(&xs, &ys).unwrap();
        for (x, y) in xs.iter().zip(&ys) {
            knot_err = knot_err.max((s.eval(*x).unwrap() - y).abs());
        }
        let (a, b) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
        let lin = CubicSpline::new(&xs, &xs.iter().map(|x| a * x + b).collect::<Vec<_>>()).unwrap();
        let (lo, hi) = (xs[0], xs[n - 1]);
        for k in 0..=50 {
            let x = (lo + (hi - lo) * k as f64 / 50.0).min(hi);
            linear_err = linear_err.max((lin.eval(x).unwrap() - (a * x + b)).abs());
        }
    }
    let hand = CubicSpline::new(&[0.0, 1.0, 2.0], &[0.0, 1.0, 0.0])
        .unwrap()
        .eval(0.5)
        .unwrap();
    let hand_err = (hand - 0.6875).abs();
    (
        knot_err <= 1e-12 && linear_err <= 1e-12 && hand_err <= 1e-12,
        format!("knot {knot_err:.1e}, linear {linear_err:.1e}, eval(0.5) = {hand} (limits 1e-12)"),
    )
}

fn property_suites() -> (bool, String) {
    let mut failures = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(9);

    // core model: reciprocal identity, range and monotonicity
    for _ in 0..2000 {
        let p = TwoSiteParams::new(
            rng.random_range(0.0..=1.0),
            rng.random_range(0.0..1.0),
            rng.random_range(0.0..1.0),
        )
        .unwrap();
        let c1 = rng.random_range(0.0..200.0);
        let c2 = c1 + rng.random_range(1e-3..50.0);
        let (a, b) = (
            Concentration::new(c1).unwrap(),
            Concentration::new(c2).unwrap(),
        );
        let r = phase_ratio_r(&p, a);
        if (r * two_site_intensity_ratio(&p, a) - 1.0).abs() > 1e-12 || !(r > 0.0 && r <= 1.0) {
            failures.push(format!("reciprocal/range at {p:?}, c={c1}"));
            break;
        }
        if p.ksv1().min(p.ksv2()) > 0.0 && phase_ratio_r(&p, b) >= r {
            failures.push(format!("monotonicity at {p:?}, c={c1}"));
            break;
        }
    }

    // dataset: label uniformity (KS at 1 %) and split exhaustiveness
    let table = fixture::calibration();
    let grid = fixture::frequencies_hz();
    let ds = dataset::generate_synthetic(&table, &grid, 5000, (0.0, 110.0), 31).unwrap();
    let mut labels = ds.labels();
    labels.sort_by(f64::total_cmp);
    let m = labels.len() as f64;
    let d = labels
        .iter()
        .enumerate()
        .map(|(i, &x)| (x / 110.0 - i as f64 / m).max((i + 1) as f64 / m - x / 110.0))
        .fold(0.0, f64::max);
    if d >= 1.628 / m.sqrt() {
        failures.push(format!("KS statistic {d:.4}"));
    }
    let (train, dev) = dataset::split(&ds, 0.8, 31).unwrap();
    let mut joined: Vec<f64> = train.labels().into_iter().chain(dev.labels()).collect();
    joined.sort_by(f64::total_cmp);
    if (train.len(), dev.len()) != (4000, 1000) || joined != labels {
        failures.push("split is not an exact partition".into());
    }

    // serialization round trips
    let dir = tempfile::tempdir().unwrap();
    let dpath = dir.path().join("d.csv");
    write_dataset(&dev, &dpath).unwrap();
    if read_dataset(&dpath).unwrap() != dev {
        failures.push("dataset round trip".into());
    }
    let cpath = dir.path().join("c.json");
    table.save(&cpath).unwrap();
    if CalibrationTable::load(&cpath).unwrap().to_file() != table.to_file() {
        failures.push("calibration round trip".into());
    }
    let model = NetworkModel::init(NetworkSpec::new(16, 3, 10).unwrap(), 4).unwrap();
    let mpath = dir.path().join("m.json");
    model.save(&mpath).unwrap();
    let back = NetworkModel::load(&mpath).unwrap();
    if back != model || back.predict_dataset(&dev).unwrap() != model.predict_dataset(&dev).unwrap()
    {
        failures.push("model round trip".into());
    }

    let ok = failures.is_empty();
    let detail = if ok {
        format!(
            "model identities, KS D = {d:.4} (< {:.4}), split, round trips",
            1.628 / m.sqrt()
        )
    } else {
        failures.join("; ")
    };
    (ok, detail)
}

struct SweepSetup {
    train: Dataset,
    dev: Dataset,
    test: Dataset,
}

fn sweep_setup() -> SweepSetup {
    let table = fixture::calibration();
    let grid = fixture::frequencies_hz();
    let ds = dataset::generate_synthetic(&table, &grid, 5000, (0.0, 110.0), DATA_SEED).unwrap();
    let (train, dev) = dataset::split(&ds, 0.8, DATA_SEED).unwrap();
    let spec = MismatchSpec::default_for(&table, &grid).unwrap();
    let test =
        dataset::generate_mismatch_test(&table, &grid, &fixture::CONCENTRATIONS, &spec, DATA_SEED)
            .unwrap();
    SweepSetup { train, dev, test }
}

fn workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn upper_cells(report: &SweepReport) -> Vec<&evaluation::TrialRow> {
    report
        .rows
        .iter()
        .filter(|r| r.layers >= 2 && r.neurons >= 10)
        .collect()
}

fn dev_ci_scale(report: &SweepReport) -> (bool, String) {
    let row = report.row(3, 50).unwrap();
    let mae = row.mae_dev.unwrap_or(f64::INFINITY);
    (
        mae <= 0.5 && row.duration_s <= 300.0,
        format!(
            "CI scale: 3x50, {} epochs, MAE_dev {mae:.4} % air (limit 0.5), {:.0} s (limit 300)",
            row.epochs, row.duration_s
        ),
    )
}

fn dev_paper_scale(setup: &SweepSetup) -> (bool, String) {
    let spec = NetworkSpec::new(16, 3, 50).unwrap();
    let cfg = TrainConfig {
        seed: rng::trial_seed(SWEEP_SEED, 3, 50),
        ..TrainConfig::default()
    };
    let start = Instant::now();
    let (model, _) = network::train(spec, &setup.train, &cfg).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let mae = evaluation::mae(&model, &setup.dev).unwrap();
    (
        mae <= 0.1 && secs <= 1800.0,
        format!("paper scale: 3x50, 1e5 epochs, MAE_dev {mae:.4} % air (limit 0.1), {secs:.0} s (limit 1800)"),
    )
}

fn complexity_trend(report: &SweepReport) -> (bool, String) {
    let base = report.row(1, 3).and_then(|r| r.mae_dev).unwrap_or(f64::NAN);
    let worst = upper_cells(report)
        .iter()
        .map(|r| r.mae_dev.unwrap_or(f64::INFINITY))
        .fold(0.0, f64::max);
    (
        base > worst,
        format!("MAE_dev(1x3) {base:.4} vs max over L>=2, n>=10 {worst:.4}"),
    )
}

fn spread(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    max / min
}

fn mismatch_floor(report: &SweepReport) -> (bool, String) {
    let rows = upper_cells(report);
    let test: Vec<f64> = rows
        .iter()
        .map(|r| r.mae_test.unwrap_or(f64::NAN))
        .collect();
    let dev: Vec<f64> = rows.iter().map(|r| r.mae_dev.unwrap_or(f64::NAN)).collect();
    let (st, sd) = (spread(&test), spread(&dev));
    (
        st <= 3.0 && sd > 3.0,
        format!("over L>=2, n>=10: MAE_test max/min {st:.2} (limit 3), MAE_dev max/min {sd:.2} (must exceed 3)"),
    )
}

fn error_profile(report: &SweepReport, setup: &SweepSetup) -> (bool, String) {
    let model = &report.models[&(3, 50)];
    let ae = ae_per_observation(model, &setup.test).unwrap();
    let mean_in = |lo: f64, hi: f64| {
        let v: Vec<f64> = ae
            .iter()
            .filter(|r| r.o2_measured >= lo && r.o2_measured <= hi)
            .map(|r| r.ae)
            .collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let (low, high) = (mean_in(0.0, 20.0), mean_in(80.0, 100.0));
    let max = ae.iter().map(|r| r.ae).fold(0.0, f64::max);
    (
        high > low && (1.0..=4.0).contains(&max),
        format!("3x50 on mismatch set: mean AE [80,100] {high:.3} vs [0,20] {low:.3}, max AE {max:.3} (range [1, 4])"),
    )
}

fn qn(args: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_quenchnet"))
        .args(args)
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// ingest → calibrate → generate → train → evaluate into `dir`; returns
/// every output file.
fn run_pipeline(dir: &Path) -> Option<Vec<PathBuf>> {
    let raw = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/raw_phase_45c.csv");
    let p = |n: &str| dir.join(n);
    let ok = qn(&["ingest", s(&raw), "--out-dir", s(&p("curves"))])
        && qn(&[
            "calibrate",
            s(&p("curves/curves_45C.json")),
            "--out",
            s(&p("calibration.json")),
        ])
        && qn(&[
            "generate",
            s(&p("calibration.json")),
            "--out",
            s(&p("data.csv")),
            "--seed",
            "11",
            "--samples",
            "1000",
        ])
        && qn(&[
            "generate",
            s(&p("calibration.json")),
            "--out",
            s(&p("test.csv")),
            "--seed",
            "11",
            "--mismatch",
        ])
        && qn(&[
            "train",
            s(&p("data.csv")),
            "--out",
            s(&p("model.json")),
            "--layers",
            "2",
            "--neurons",
            "10",
            "--epochs",
            "500",
            "--seed",
            "11",
            "--trace",
            s(&p("trace.csv")),
        ])
        && qn(&[
            "evaluate",
            "--model",
            s(&p("model.json")),
            s(&p("test.csv")),
            "--out-dir",
            s(&p("eval")),
        ]);
    if !ok {
        return None;
    }
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).ok()? {
            let path = e.ok()?.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                files.push(path.strip_prefix(dir).ok()?.to_path_buf());
            }
        }
    }
    files.sort();
    Some(files)
}

fn determinism() -> (bool, String) {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (Some(fa), Some(fb)) = (run_pipeline(a.path()), run_pipeline(b.path())) else {
        return (false, "pipeline command failed".into());
    };
    let same_files = fa == fb
        && fa
            .iter()
            .all(|f| fs::read(a.path().join(f)).ok() == fs::read(b.path().join(f)).ok());

    let sweep = |workers: &str| -> Option<Vec<u8>> {
        let out = a.path().join(format!("sweep_{workers}.csv"));
        let ok = qn(&[
            "sweep",
            s(&a.path().join("data.csv")),
            "--test",
            s(&a.path().join("test.csv")),
            "--out",
            s(&out),
            "--seed",
            "11",
            "--epochs",
            "200",
            "--layer-counts",
            "1,2",
            "--neuron-counts",
            "3,5",
            "--workers",
            workers,
            "--omit-timing",
        ]);
        if ok {
            fs::read(out).ok()
        } else {
            None
        }
    };
    let reports: Vec<_> = ["1", "2", "4"].iter().map(|w| sweep(w)).collect();
    let same_sweep = reports[0].is_some() && reports.iter().all(|r| r == &reports[0]);
    (
        same_files && same_sweep,
        format!(
            "{} pipeline files byte-identical: {same_files}; sweep report identical for 1/2/4 workers: {same_sweep}",
            fa.len()
        ),
    )
}

fn main() {
    let mut outcomes = vec![
        timed("1", gradient_correctness),
        timed("2", fit_round_trip),
        timed("3", spline_correctness),
    ];
    let suites = timed("9", property_suites);

    let setup = sweep_setup();
    let grid = SweepGrid {
        base_seed: SWEEP_SEED,
        ..SweepGrid::default()
    };
    println!(
        "running the CI-scale sweep: {} architectures x {} epochs on {} worker(s)",
        grid.cells().len(),
        grid.train_config.epochs,
        workers()
    );
    let start = Instant::now();
    let sweep = evaluation::run_sweep(
        &grid,
        &setup.train,
        &setup.dev,
        Some(&setup.test),
        workers(),
    )
    .unwrap();
    println!("sweep finished in {:.0} s", start.elapsed().as_secs_f64());
    print!("{}", evaluation::sweep_summary(&sweep.rows, true));

    outcomes.push(timed("4 (CI)", || dev_ci_scale(&sweep)));
    if std::env::var_os("QUENCHNET_SKIP_PAPER_SCALE").is_some() {
        println!("criterion 4 (paper) SKIPPED  QUENCHNET_SKIP_PAPER_SCALE is set");
    } else {
        outcomes.push(timed("4 (paper)", || dev_paper_scale(&setup)));
    }
    outcomes.push(timed("5", || complexity_trend(&sweep)));
    outcomes.push(timed("6", || mismatch_floor(&sweep)));
    outcomes.push(timed("7", || error_profile(&sweep, &setup)));
    outcomes.push(timed("8", determinism));
    outcomes.push(suites);

    println!("\nsummary");
    for o in &outcomes {
        report(o);
    }
    let failed = outcomes.iter().filter(|o| !o.pass).count();
    println!(
        "{} of {} criteria passed",
        outcomes.len() - failed,
        outcomes.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
