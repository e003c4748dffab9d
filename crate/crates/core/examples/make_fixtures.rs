//! Regenerates the sample files under `fixtures/` from the built-in fixture sensor.

use std::path::Path;

use quenchnet::cli::raw::{write_raw, RawRow};
use quenchnet::fixture;

fn main() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    std::fs::create_dir_all(&dir).expect("create fixtures/");
    let rows: Vec<RawRow> = fixture::raw_rows()
        .into_iter()
        .map(
            |(frequency_hz, temperature_c, o2_percent_air, tan_theta)| RawRow {
                frequency_hz,
                temperature_c,
                o2_percent_air,
                tan_theta,
            },
        )
        .collect();
    write_raw(&rows, &dir.join("raw_phase_45c.csv")).expect("write raw readings");
    fixture::calibration()
        .save(&dir.join("calibration_45c.json"))
        .expect("write calibration");
    println!("wrote {}", dir.display());
}
