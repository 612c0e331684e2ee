//! Runs an experiment config and writes its report.
//!
//! `cargo run --release --example run_config -- configs/model_minimize.toml out/`

use std::path::PathBuf;

use warpmin::cli::{emit_report, run_config, ExperimentConfig, Format, Task};

fn main() -> warpmin::Result<()> {
    let mut args = std::env::args().skip(1);
    let config = match args.next() {
        Some(path) => ExperimentConfig::load(path.as_ref())?,
        None => {
            let mut c = ExperimentConfig::model(Task::Minimize);
            c.surface.modes.push(warpmin::cli::config::SurfaceMode {
                amplitude: 0.2,
                wavevector: vec![1, 0],
            });
            c
        }
    };
    let out = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("warpmin-run-config"));

    let report = run_config(&config)?;
    for format in [Format::Json, Format::Csv, Format::Text] {
        for path in emit_report(&report, format, &out)? {
            println!("wrote {}", path.display());
        }
    }
    print!("{}", std::fs::read_to_string(out.join("report.txt")).map_err(|e| warpmin::Error::Io { path: out.clone(), source: e })?);
    std::process::exit(report.exit_code());
}
