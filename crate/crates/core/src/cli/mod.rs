//! Config-driven verification runs.

pub mod config;
pub mod report;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::foliation::{build_foliation, linearization_check, monotonicity_report};
use crate::minimize::minimize_with_trace;
use crate::oracle::{curvature_fd, curvature_fd_richardson, AmbientPoint, MetricSample};
use crate::stability::{rigidity_report, stability_spectrum};
use crate::surface::io::SurfaceSnapshot;
use crate::surface::{htilde_values, induced_geometry, GraphSurface};
use crate::warp::{
    curvature_profile, identity_residual_ricci, identity_residual_scalar, spectral_condition_margin,
    RadialWeight, WarpedMetricSpec,
};

pub use config::{ExperimentConfig, Format, Task};
pub use report::{emit_report, to_canonical_json, Comparison, RunReport, TaskResult, Verdict};

use report::{
    CurvatureResult, FoliationSummary, IdentityTable, LeafSummary, MinimizeResult, Provenance,
    RigidityResult, SpectrumResult,
};

pub const TIMESTAMP_FILE: &str = "timestamps.json";

/// Runs the configured task. Identical configs give identical reports.
pub fn run_config(config: &ExperimentConfig) -> Result<RunReport> {
    config.validate()?;
    let spec = config.spec()?;
    let u = config.weight()?;
    let tol = |t: f64| t * config.tolerances.scale;
    let tols = &config.tolerances;
    let mut verdicts = Vec::new();
    let result = match config.task {
        Task::VerifyIdentities => {
            let tables = identities(config)?;
            for t in &tables {
                verdicts.push(Verdict::new(
                    format!("identity_ricci_n{}", t.n),
                    t.max_ricci,
                    Comparison::AbsAtMost,
                    tol(tols.identity),
                ));
                if let Some(s) = t.max_scalar {
                    verdicts.push(Verdict::new(
                        format!("identity_scalar_n{}", t.n),
                        s,
                        Comparison::AbsAtMost,
                        tol(tols.identity),
                    ));
                }
            }
            TaskResult::Identities(tables)
        }
        Task::Curvature => {
            let c = curvature(config, &spec, &u)?;
            verdicts.push(Verdict::new(
                "oracle_difference",
                c.oracle_difference,
                Comparison::AbsAtMost,
                tol(tols.oracle),
            ));
            verdicts.push(Verdict::new(
                "oracle_order_minus_two",
                c.oracle_order - 2.0,
                Comparison::AbsAtMost,
                tol(tols.oracle_order),
            ));
            TaskResult::Curvature(c)
        }
        Task::Minimize => {
            let m = minimize(config, &spec, &u)?;
            verdicts.push(Verdict::new("htilde_residual", m.htilde_residual, Comparison::AbsAtMost, tol(tols.htilde)));
            if config.is_rigid_model(&spec) {
                verdicts.push(Verdict::new(
                    "energy_minus_fiber_volume",
                    m.energy - spec.fiber().volume(),
                    Comparison::AbsAtMost,
                    tol(tols.energy),
                ));
                verdicts.push(Verdict::new("deviation", m.deviation, Comparison::AbsAtMost, tol(tols.deviation)));
            }
            if let Some(r) = &m.rigidity {
                verdicts.push(Verdict::new("rigidity_max_residual", r.max(), Comparison::AbsAtMost, tol(tols.rigidity)));
            }
            TaskResult::Minimize(m)
        }
        Task::Spectrum => {
            let surface = prepared_surface(config, &spec, &u, config.spectrum.minimize)?;
            let s = stability_spectrum(&surface, &spec, &u, config.spectrum.count)?;
            let mass = induced_geometry(&surface, &spec, &u)?.calculus().mass();
            let first = &s.eigenfunctions[0];
            let dot: f64 = first.iter().zip(&mass).map(|(p, m)| p * m).sum();
            let norm_sq: f64 = first.iter().zip(&mass).map(|(p, m)| p * p * m).sum();
            let total: f64 = mass.iter().sum();
            let result = SpectrumResult {
                constant_similarity: dot.abs() / (norm_sq * total).sqrt(),
                eigenvalues: s.eigenvalues,
                rayleigh_defect: s.rayleigh_defect,
                method: s.method,
                htilde_residual: max_abs(&htilde_values(&surface, &spec, &u)),
            };
            verdicts.push(Verdict::new(
                "lowest_eigenvalue",
                result.eigenvalues[0],
                Comparison::Above,
                -tol(tols.eigenvalue),
            ));
            TaskResult::Spectrum(result)
        }
        Task::Foliate => {
            let f = foliate(config, &spec, &u)?;
            let worst_mean = f.leaves.iter().map(|l| l.mean_error.abs()).fold(0.0, f64::max);
            verdicts.push(Verdict::new("mean_constraint", worst_mean, Comparison::AbsAtMost, tol(tols.mean)));
            let min_speed = f.leaves.iter().map(|l| l.min_speed).fold(f64::INFINITY, f64::min);
            verdicts.push(Verdict::new("min_speed", min_speed, Comparison::Above, 0.0));
            verdicts.push(Verdict::new("monotonicity_violation", f.max_violation, Comparison::AtMost, tol(tols.monotonicity)));
            if config.is_rigid_model(&spec) {
                let worst_h = f.leaves.iter().map(|l| l.htilde.abs()).fold(0.0, f64::max);
                verdicts.push(Verdict::new("leaf_htilde", worst_h, Comparison::AbsAtMost, tol(tols.leaf_htilde)));
                let (lo, hi) = f
                    .leaves
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), l| (lo.min(l.energy), hi.max(l.energy)));
                verdicts.push(Verdict::new("energy_spread", hi - lo, Comparison::AbsAtMost, tol(tols.energy)));
                if let Some(d) = f.linearization_deviation {
                    verdicts.push(Verdict::new("linearization_deviation", d, Comparison::AbsAtMost, tol(tols.linearization)));
                }
            }
            TaskResult::Foliation(f)
        }
        Task::Rigidity => {
            let surface = prepared_surface(config, &spec, &u, config.rigidity.minimize)?;
            let report = rigidity_report(&surface, &spec, &u, config.rigidity.kind)?;
            verdicts.push(Verdict::new("rigidity_max_residual", report.max(), Comparison::AbsAtMost, tol(tols.rigidity)));
            TaskResult::Rigidity(RigidityResult {
                kind: config.rigidity.kind,
                minimized: config.rigidity.minimize,
                energy: crate::surface::weighted_area(&surface, &spec, &u)?,
                report,
            })
        }
    };
    Ok(RunReport {
        task: config.task,
        provenance: provenance(config)?,
        result,
        verdicts,
    })
}

fn provenance(config: &ExperimentConfig) -> Result<Provenance> {
    let canonical = to_canonical_json(&serde_json::to_value(config)?);
    let digest = Sha256::digest(canonical.as_bytes());
    Ok(Provenance {
        config_sha256: digest.iter().map(|b| format!("{b:02x}")).collect(),
        version: env!("CARGO_PKG_VERSION").to_owned(),
        timestamps: TIMESTAMP_FILE.to_owned(),
    })
}

fn max_abs(values: &[f64]) -> f64 {
    values.iter().fold(0.0, |m: f64, v| m.max(v.abs()))
}

fn sample_times(count: usize) -> Vec<f64> {
    (0..count)
        .map(|j| std::f64::consts::TAU * j as f64 / count as f64)
        .collect()
}

fn identities(config: &ExperimentConfig) -> Result<Vec<IdentityTable>> {
    let t = sample_times(config.identities.samples);
    config
        .identity_specs()?
        .iter()
        .map(|spec| {
            let ricci = t
                .iter()
                .map(|&s| identity_residual_ricci(spec, s))
                .collect::<Result<Vec<_>>>()?;
            let scalar = if spec.fiber().scalar_curvature == 0.0 {
                Some(
                    t.iter()
                        .map(|&s| identity_residual_scalar(spec, s))
                        .collect::<Result<Vec<_>>>()?,
                )
            } else {
                None
            };
            Ok(IdentityTable {
                n: spec.n(),
                max_ricci: max_abs(&ricci),
                max_scalar: scalar.as_deref().map(max_abs),
                t: t.clone(),
                residual_ricci: ricci,
                residual_scalar: scalar,
            })
        })
        .collect()
}

fn curvature(config: &ExperimentConfig, spec: &WarpedMetricSpec, u: &RadialWeight) -> Result<CurvatureResult> {
    let params = &config.curvature;
    let t = sample_times(params.samples);
    let mut result = CurvatureResult {
        t: t.clone(),
        ric_tt: Vec::new(),
        fiber_eigenvalue: Vec::new(),
        scalar: Vec::new(),
        kind: params.kind,
        margin: Vec::new(),
        oracle_points: params.oracle_points,
        oracle_difference: 0.0,
        oracle_order: f64::NAN,
    };
    for &s in &t {
        let c = curvature_profile(spec, s)?;
        result.ric_tt.push(c.ric_tt);
        result.fiber_eigenvalue.push(c.fiber_eigenvalue());
        result.scalar.push(c.scalar);
        result.margin.push(spectral_condition_margin(spec, u, s, params.kind)?.margin);
    }
    if params.oracle_points > 0 {
        let h = params.oracle_step;
        let (mut coarse_err, mut fine_err) = (0.0f64, 0.0f64);
        for (j, s) in sample_times(params.oracle_points).into_iter().enumerate() {
            // Offset the samples so they avoid the symmetric points of f.
            let s = s + 0.1 + 0.01 * j as f64;
            let x: Vec<f64> = (0..spec.fiber_dim()).map(|i| 0.3 * (i + 1) as f64).collect();
            let p = AmbientPoint::new(spec, s, x)?;
            let exact = curvature_profile(spec, s)?;
            let metric = crate::oracle::metric_at(spec, &p);
            let deviation = |o: &crate::oracle::OracleCurvature, m: &MetricSample| {
                let mut d = (o.scalar - exact.scalar).abs();
                d = d.max((o.ricci_unit(m, 0) - exact.ric_tt).abs());
                for a in 1..=spec.fiber_dim() {
                    d = d.max((o.ricci_unit(m, a) - exact.fiber_eigenvalue()).abs());
                }
                d
            };
            let rich = curvature_fd_richardson(spec, &p, h)?;
            result.oracle_difference = result.oracle_difference.max(deviation(&rich, &metric));
            coarse_err = coarse_err.max(deviation(&curvature_fd(spec, &p, h)?, &metric));
            fine_err = fine_err.max(deviation(&curvature_fd(spec, &p, 0.5 * h)?, &metric));
        }
        result.oracle_order = (coarse_err / fine_err).log2();
    }
    Ok(result)
}

fn minimize(config: &ExperimentConfig, spec: &WarpedMetricSpec, u: &RadialWeight) -> Result<MinimizeResult> {
    let initial = config.surface(spec)?;
    let m = minimize_with_trace(&initial, spec, u, &config.solver)?;
    let rigidity = if config.is_rigid_model(spec) {
        Some(rigidity_report(&m.surface, spec, u, config.rigidity.kind)?)
    } else {
        None
    };
    Ok(MinimizeResult {
        energy: m.energy,
        htilde_residual: m.residual,
        mean: m.surface.mean(),
        deviation: m.surface.max_deviation(),
        iterations: m.iterations,
        rigidity,
        trace: m.trace,
        surface: SurfaceSnapshot::of(&m.surface),
    })
}

fn prepared_surface(
    config: &ExperimentConfig,
    spec: &WarpedMetricSpec,
    u: &RadialWeight,
    minimize_first: bool,
) -> Result<GraphSurface> {
    let initial = config.surface(spec)?;
    if minimize_first {
        Ok(minimize_with_trace(&initial, spec, u, &config.solver)?.surface)
    } else {
        Ok(initial)
    }
}

fn foliate(config: &ExperimentConfig, spec: &WarpedMetricSpec, u: &RadialWeight) -> Result<FoliationSummary> {
    let params = &config.foliation;
    let grid = config.grid(spec)?;
    let foliation = build_foliation(spec, u, &grid, params.epsilon, params.steps, &config.solver)?;
    let mono = monotonicity_report(&foliation, spec, u)?;
    let linearization_deviation = if params.linearization && config.is_rigid_model(spec) {
        let slice = GraphSurface::slice(grid.clone(), 0.0)?;
        let tests: Vec<Vec<f64>> = std::iter::once(vec![1.0; grid.len()])
            .chain((0..grid.dim()).map(|a| {
                let k = std::f64::consts::TAU / grid.periods()[a];
                grid.sample(|x| (k * x[a]).cos())
            }))
            .collect();
        Some(linearization_check(spec, u, &slice, &tests)?)
    } else {
        None
    };
    let leaves = foliation
        .leaves
        .iter()
        .zip(&foliation.psi)
        .zip(&mono.conserved)
        .map(|((leaf, psi), conserved)| LeafSummary {
            t: leaf.t,
            htilde: leaf.htilde,
            lagrange: leaf.lagrange,
            residual: leaf.residual,
            energy: leaf.energy,
            psi: *psi,
            conserved: *conserved,
            mean_error: leaf.surface.mean() - leaf.t,
            min_speed: leaf.min_speed(),
        })
        .collect();
    Ok(FoliationSummary {
        leaves,
        min_separation: (foliation.leaves.len() > 1).then(|| foliation.min_separation()),
        max_violation: mono.max_violation,
        linearization_deviation,
    })
}

/// Writes wall-clock start and end times (seconds since the Unix epoch)
/// next to a report.
pub fn write_timestamps(dir: &std::path::Path, started: f64, finished: f64) -> Result<std::path::PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(TIMESTAMP_FILE);
    let value = serde_json::json!({ "started_unix": started, "finished_unix": finished });
    std::fs::write(&path, to_canonical_json(&value)).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp(name: &str) -> std::path::PathBuf {
        std::env::temp_dir().join(format!("warpmin-cli-{name}-{}", std::process::id()))
    }

    #[test]
    fn identities_all_dimensions() {
        let mut c = ExperimentConfig::model(Task::VerifyIdentities);
        c.identities.dimensions = Some((3..=7).collect());
        let report = run_config(&c).unwrap();
        assert!(report.passed(), "{:?}", report.verdicts);
        assert_eq!(report.verdicts.len(), 10);
        let dir = tmp("identities");
        let paths = emit_report(&report, Format::Csv, &dir).unwrap();
        let table = std::fs::read_to_string(dir.join("identities_n5.csv")).unwrap();
        assert!(table.starts_with("t,residual_ricci,residual_scalar\n"));
        assert_eq!(table.lines().count(), 257);
        assert_eq!(paths.len(), 6);
        std::fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn curvature_task() {
        let mut c = ExperimentConfig::model(Task::Curvature);
        c.curvature.samples = 16;
        let report = run_config(&c).unwrap();
        assert!(report.passed(), "{:?}", report.verdicts);
        let TaskResult::Curvature(r) = &report.result else { panic!() };
        // Radial part of the margin vanishes identically in the model; the
        // fiber part is (log f)'', negative where cos t > -1/2.
        assert!(r.margin.iter().all(|m| *m <= 1e-12));
        assert!(r.margin[0] < -0.1);
    }

    #[test]
    fn degenerate_foliation_passes() {
        let mut c = ExperimentConfig::model(Task::Foliate);
        c.grid.resolution = 8;
        c.foliation.epsilon = 0.0;
        c.foliation.linearization = false;
        let report = run_config(&c).unwrap();
        assert!(report.passed(), "{:?}", report.verdicts);
        let TaskResult::Foliation(f) = &report.result else { panic!() };
        assert_eq!(f.leaves.len(), 1);
        assert_eq!(f.leaves[0].t, 0.0);
        let dir = tmp("foliate");
        emit_report(&report, Format::Csv, &dir).unwrap();
        let table = std::fs::read_to_string(dir.join("foliation.csv")).unwrap();
        assert!(table.starts_with("t,htilde,energy,psi\n"));
        std::fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn minimize_report_round_trips() {
        let mut c = ExperimentConfig::model(Task::Minimize);
        c.grid.resolution = 16;
        c.surface.modes.push(config::SurfaceMode {
            amplitude: 0.2,
            wavevector: vec![1, 0],
        });
        let report = run_config(&c).unwrap();
        assert!(report.passed(), "{:?}", report.verdicts);
        let json = report.to_json().unwrap();
        assert_eq!(RunReport::from_json(&json).unwrap(), report);
        assert_eq!(run_config(&c).unwrap().to_json().unwrap(), json);
        for format in [Format::Json, Format::Text, Format::Csv] {
            let dir = tmp(&format!("min-{format:?}"));
            assert!(!emit_report(&report, format, &dir).unwrap().is_empty());
            std::fs::remove_dir_all(dir).unwrap();
        }
    }

    #[test]
    fn failing_verdict_gives_exit_code_two() {
        let mut c = ExperimentConfig::model(Task::Spectrum);
        c.grid.resolution = 8;
        // A unit weight on the model makes the slice t = 1 non-minimal.
        c.weight = config::WeightConfig::Unit {};
        c.surface.height = 1.0;
        assert!(matches!(run_config(&c), Err(Error::NotMinimal { .. })));
        let mut c = ExperimentConfig::model(Task::Rigidity);
        c.grid.resolution = 8;
        c.rigidity.minimize = false;
        c.surface.modes.push(config::SurfaceMode {
            amplitude: 0.1,
            wavevector: vec![0, 1],
        });
        let report = run_config(&c).unwrap();
        assert_eq!(report.exit_code(), 2);
    }

    #[test]
    fn spectrum_of_model_slice() {
        let mut c = ExperimentConfig::model(Task::Spectrum);
        c.grid.resolution = 16;
        let report = run_config(&c).unwrap();
        assert!(report.passed());
        let TaskResult::Spectrum(s) = &report.result else { panic!() };
        assert!(s.eigenvalues[0].abs() < 1e-10);
        assert!(s.constant_similarity > 1.0 - 1e-10);
    }
}
