use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, ValueEnum};

use warpmin::cli::{emit_report, run_config, write_timestamps, ExperimentConfig, Format, Task};

/// Only environment variable read: overrides the output directory.
const OUT_DIR_ENV: &str = "WARPMIN_OUT_DIR";

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Verb {
    Verify,
    Curvature,
    Minimize,
    Spectrum,
    Foliate,
    Rigidity,
}

impl Verb {
    fn task(self) -> Task {
        match self {
            Verb::Verify => Task::VerifyIdentities,
            Verb::Curvature => Task::Curvature,
            Verb::Minimize => Task::Minimize,
            Verb::Spectrum => Task::Spectrum,
            Verb::Foliate => Task::Foliate,
            Verb::Rigidity => Task::Rigidity,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
    Text,
}

/// Verification runs for weighted minimal hypersurfaces in warped products.
///
/// Exit codes: 0 when every verdict passes, 2 when a verdict fails, 1 on
/// errors.
#[derive(Debug, Parser)]
#[command(version)]
struct Args {
    verb: Verb,
    /// TOML experiment config; the rigid model at 32² when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Multiplies every verdict tolerance.
    #[arg(long)]
    tolerance_scale: Option<f64>,
}

fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

fn run(args: Args) -> warpmin::Result<i32> {
    let task = args.verb.task();
    let mut config = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::model(task),
    };
    if config.task != task {
        return Err(warpmin::Error::Config(format!(
            "config task is `{}` but the verb asks for `{}`",
            config.task.name(),
            task.name()
        )));
    }
    if let Some(scale) = args.tolerance_scale {
        config.tolerances.scale = scale;
    }
    if let Some(format) = args.format {
        config.output.format = match format {
            FormatArg::Json => Format::Json,
            FormatArg::Csv => Format::Csv,
            FormatArg::Text => Format::Text,
        };
    }
    let dir = args
        .out
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| config.output_dir());

    let started = unix_now();
    let report = run_config(&config)?;
    let finished = unix_now();

    for path in emit_report(&report, config.output.format, &dir)? {
        println!("wrote {}", path.display());
    }
    write_timestamps(&dir, started, finished)?;
    for v in &report.verdicts {
        println!(
            "{} {} = {:.6e} (bound {:.1e})",
            if v.pass { "PASS" } else { "FAIL" },
            v.name,
            v.value,
            v.bound
        );
    }
    Ok(report.exit_code())
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
