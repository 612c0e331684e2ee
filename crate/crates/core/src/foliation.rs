//! Constant-`H̃` leaves, foliations by continuation in the mean height, and
//! the monotonicity of `exp(∫Ψ) H̃`.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::FftPoisson;
use crate::minimize::{BorderedNewton, SolveOptions};
use crate::surface::{
    induced_geometry, mean, EnergyKernel, GraphSurface, PeriodicGrid, SurfaceGeometry,
};
use crate::warp::{RadialWeight, WarpedMetricSpec};

const MAX_HALVINGS: usize = 6;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FoliationLeaf {
    pub t: f64,
    #[serde(skip)]
    pub surface: GraphSurface,
    /// Mean of `H̃` over the leaf.
    pub htilde: f64,
    /// Newton multiplier `λ` of the mean constraint.
    pub lagrange: f64,
    /// `max |H̃ - λ|` at convergence.
    pub residual: f64,
    /// Normal speed `φ_t = ⟨∂_t Φ, ν_t⟩` of the family.
    #[serde(skip)]
    pub phi: Vec<f64>,
    pub energy: f64,
}

impl FoliationLeaf {
    pub fn rho(&self) -> &[f64] {
        self.surface.rho()
    }

    pub fn min_speed(&self) -> f64 {
        self.phi.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FoliationResult {
    pub leaves: Vec<FoliationLeaf>,
    pub psi: Vec<f64>,
    pub energies: Vec<f64>,
}

impl FoliationResult {
    pub fn times(&self) -> Vec<f64> {
        self.leaves.iter().map(|l| l.t).collect()
    }

    /// `min_k min_x (ρ_{k+1} - ρ_k)`; positive for a foliation.
    pub fn min_separation(&self) -> f64 {
        self.leaves
            .windows(2)
            .flat_map(|p| p[1].rho().iter().zip(p[0].rho()).map(|(a, b)| a - b))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Solves `H̃(ρ) = λ` on every node with `mean(ρ) = t`, starting from
/// `initial`. `φ` comes from the tangent `∂ρ/∂t` of the constrained family.
pub fn solve_leaf(
    spec: &WarpedMetricSpec,
    u: &RadialWeight,
    t: f64,
    initial: &GraphSurface,
    opts: &SolveOptions,
) -> Result<FoliationLeaf> {
    opts.validate()?;
    initial.check_against(spec)?;
    if !t.is_finite() {
        return Err(Error::NonFinite("t"));
    }
    let grid = initial.grid();
    let kernel = EnergyKernel::new(spec, u, grid);
    let solver = BorderedNewton::new(&kernel, grid, opts);
    let mut trace = Vec::new();
    let solution = solver.solve(initial.rho(), t, opts.iterations(), &mut trace, 0)?;
    let surface = initial.with_rho(solution.rho.clone())?;
    let jac = solver.jacobian(surface.rho());
    let mut rhs = vec![0.0; grid.len() + 1];
    rhs[grid.len()] = 1.0;
    let mut tangent = solver.bordered_solve(&jac, surface.rho(), &rhs)?;
    tangent.pop();
    let geometry = induced_geometry(&surface, spec, u)?;
    let phi = tangent
        .iter()
        .enumerate()
        .map(|(k, v)| v * geometry.normal_t(k))
        .collect();
    let htilde = kernel.htilde(surface.rho());
    Ok(FoliationLeaf {
        t,
        htilde: mean(&htilde),
        lagrange: solution.lambda,
        residual: solution.residual,
        phi,
        energy: kernel.energy(surface.rho()),
        surface,
    })
}

/// Leaves at `steps` uniformly spaced heights in `[-ε, ε]`, continued outward
/// from `t = 0`; failed continuation steps are halved.
pub fn build_foliation(
    spec: &WarpedMetricSpec,
    u: &RadialWeight,
    grid: &PeriodicGrid,
    epsilon: f64,
    steps: usize,
    opts: &SolveOptions,
) -> Result<FoliationResult> {
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidInput("foliation half-width must be nonnegative".into()));
    }
    let times: Vec<f64> = if epsilon == 0.0 || steps <= 1 {
        vec![0.0]
    } else {
        (0..steps)
            .map(|k| -epsilon + 2.0 * epsilon * k as f64 / (steps - 1) as f64)
            .collect()
    };
    let center = (0..times.len())
        .min_by(|&a, &b| times[a].abs().total_cmp(&times[b].abs()))
        .expect("at least one leaf");
    let seed = GraphSurface::slice(grid.clone(), times[center])?;
    let first = solve_leaf(spec, u, times[center], &seed, opts).map_err(|e| Error::Leaf {
        t: times[center],
        source: Box::new(e),
    })?;

    let mut slots: Vec<Option<FoliationLeaf>> = vec![None; times.len()];
    let mut previous = first.clone();
    for k in center + 1..times.len() {
        previous = continue_leaf(spec, u, &previous, times[k], opts)?;
        slots[k] = Some(previous.clone());
    }
    previous = first.clone();
    for k in (0..center).rev() {
        previous = continue_leaf(spec, u, &previous, times[k], opts)?;
        slots[k] = Some(previous.clone());
    }
    slots[center] = Some(first);
    let mut leaves: Vec<FoliationLeaf> = slots.into_iter().map(|l| l.expect("filled")).collect();

    if leaves.len() > 1 {
        let speeds: Vec<Vec<f64>> = (0..leaves.len())
            .map(|k| {
                let (a, b) = match k {
                    0 => (0, 1),
                    k if k + 1 == leaves.len() => (k - 1, k),
                    k => (k - 1, k + 1),
                };
                let dt = leaves[b].t - leaves[a].t;
                let geometry = induced_geometry(&leaves[k].surface, spec, u)?;
                Ok(leaves[b]
                    .rho()
                    .iter()
                    .zip(leaves[a].rho())
                    .enumerate()
                    .map(|(n, (hi, lo))| (hi - lo) / dt * geometry.normal_t(n))
                    .collect())
            })
            .collect::<Result<_>>()?;
        for (leaf, phi) in leaves.iter_mut().zip(speeds) {
            leaf.phi = phi;
        }
    }
    let psi = leaves
        .iter()
        .map(|leaf| {
            let geometry = induced_geometry(&leaf.surface, spec, u)?;
            Ok(leaf_psi(spec, &geometry, &leaf.phi))
        })
        .collect::<Result<_>>()?;
    let energies = leaves.iter().map(|l| l.energy).collect();
    Ok(FoliationResult {
        leaves,
        psi,
        energies,
    })
}

fn continue_leaf(
    spec: &WarpedMetricSpec,
    u: &RadialWeight,
    from: &FoliationLeaf,
    target: f64,
    opts: &SolveOptions,
) -> Result<FoliationLeaf> {
    let attempt = |start: &FoliationLeaf, t: f64| -> Result<FoliationLeaf> {
        let shift = t - start.t;
        let seed = start.surface.with_rho(start.rho().iter().map(|r| r + shift).collect())?;
        solve_leaf(spec, u, t, &seed, opts)
    };
    let mut last_error = None;
    for halvings in 0..=MAX_HALVINGS {
        let pieces = 1usize << halvings;
        let mut current = from.clone();
        let mut failed = None;
        for j in 1..=pieces {
            let t = from.t + (target - from.t) * j as f64 / pieces as f64;
            match attempt(&current, t) {
                Ok(leaf) => current = leaf,
                Err(e) => {
                    failed = Some(e);
                    break;
                }
            }
        }
        match failed {
            None => return Ok(current),
            Some(e) => last_error = Some(e),
        }
    }
    Err(Error::Leaf {
        t: target,
        source: Box::new(last_error.expect("at least one attempt")),
    })
}

/// `Ψ = (∫ 1/φ dA)⁻¹ ∫ (n - 3) w_ν dA`.
fn leaf_psi(spec: &WarpedMetricSpec, geometry: &SurfaceGeometry, phi: &[f64]) -> f64 {
    let factor = spec.n() as f64 - 3.0;
    if factor == 0.0 {
        return 0.0;
    }
    let calc = geometry.calculus();
    let inverse: Vec<f64> = phi.iter().map(|p| 1.0 / p).collect();
    factor * calc.integrate(&geometry.w_nu) / calc.integrate(&inverse)
}

#[derive(Clone, Debug, Serialize)]
pub struct MonotonicityReport {
    pub t: Vec<f64>,
    pub psi: Vec<f64>,
    /// `P(t) = exp(∫₀ᵗ Ψ) H̃(t)`.
    pub conserved: Vec<f64>,
    /// `max_k (P(t_{k+1}) - P(t_k)) / Δt`; zero for a single leaf.
    pub max_violation: f64,
}

pub fn monotonicity_report(
    foliation: &FoliationResult,
    spec: &WarpedMetricSpec,
    u: &RadialWeight,
) -> Result<MonotonicityReport> {
    let _ = u;
    for leaf in &foliation.leaves {
        let speed = leaf.min_speed();
        if !(speed > 0.0) {
            return Err(Error::NonpositiveSpeed {
                t: leaf.t,
                value: speed,
            });
        }
    }
    let t = foliation.times();
    let psi = if spec.n() == 3 {
        vec![0.0; t.len()]
    } else {
        foliation.psi.clone()
    };
    let anchor = (0..t.len())
        .min_by(|&a, &b| t[a].abs().total_cmp(&t[b].abs()))
        .ok_or_else(|| Error::InvalidInput("foliation has no leaves".into()))?;
    // Trapezoid accumulation of ∫Ψ from the anchor leaf, whose own offset
    // ∫₀^{t_anchor} Ψ uses Ψ(t_anchor).
    let mut integral = vec![0.0; t.len()];
    integral[anchor] = psi[anchor] * t[anchor];
    for k in anchor + 1..t.len() {
        integral[k] = integral[k - 1] + 0.5 * (psi[k] + psi[k - 1]) * (t[k] - t[k - 1]);
    }
    for k in (0..anchor).rev() {
        integral[k] = integral[k + 1] - 0.5 * (psi[k] + psi[k + 1]) * (t[k + 1] - t[k]);
    }
    let conserved: Vec<f64> = foliation
        .leaves
        .iter()
        .zip(&integral)
        .map(|(leaf, i)| i.exp() * leaf.htilde)
        .collect();
    let max_violation = conserved
        .windows(2)
        .zip(t.windows(2))
        .map(|(p, s)| (p[1] - p[0]) / (s[1] - s[0]))
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(MonotonicityReport {
        t,
        psi,
        conserved,
        max_violation: if max_violation.is_finite() { max_violation } else { 0.0 },
    })
}

/// `max_φ max|J φ - (-Δ_Σ φ)| / max|φ|` on a slice, with `J` the
/// finite-difference Jacobian of the `H̃` map and `Δ_Σ` applied spectrally.
pub fn linearization_check(
    spec: &WarpedMetricSpec,
    u: &RadialWeight,
    surface: &GraphSurface,
    tests: &[Vec<f64>],
) -> Result<f64> {
    surface.check_against(spec)?;
    if surface.max_deviation() > 1e-12 {
        return Err(Error::InvalidInput(
            "the linearization check compares against the slice Laplacian and needs a slice".into(),
        ));
    }
    let grid = surface.grid();
    let opts = SolveOptions::default();
    let kernel = EnergyKernel::new(spec, u, grid);
    let solver = BorderedNewton::new(&kernel, grid, &opts);
    let jac = solver.jacobian(surface.rho());
    let fft = FftPoisson::new(grid);
    let f = spec.warp().value(surface.mean());
    let mut worst: f64 = 0.0;
    for phi in tests {
        if phi.len() != grid.len() {
            return Err(Error::InvalidInput(format!(
                "test function has {} values for {} nodes",
                phi.len(),
                grid.len()
            )));
        }
        let scale = phi.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
        if scale == 0.0 {
            continue;
        }
        let applied = jac.matvec(phi);
        let expected = fft.spectral_negative_laplacian(phi);
        let dev = applied
            .iter()
            .zip(&expected)
            .map(|(a, e)| (a - e / (f * f)).abs())
            .fold(0.0, f64::max);
        worst = worst.max(dev / scale);
    }
    Ok(worst)
}

#[derive(Clone, Debug, Serialize)]
struct LeafRow {
    t: f64,
    htilde: f64,
    energy: f64,
    psi: f64,
}

#[derive(Clone, Debug, Serialize)]
struct Manifest<'a> {
    leaves: usize,
    t_min: f64,
    t_max: f64,
    leaf_table: &'a str,
    min_speed: f64,
    min_separation: f64,
    max_violation: Option<f64>,
}

/// Writes `foliation.csv` (columns `t, htilde, energy, psi`) and
/// `foliation.json` (a manifest) into `dir`.
pub fn export_foliation(
    foliation: &FoliationResult,
    monotonicity: Option<&MonotonicityReport>,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let table = dir.join("foliation.csv");
    let file = std::fs::File::create(&table).map_err(|e| Error::io(&table, e))?;
    let mut writer = csv::Writer::from_writer(file);
    for (leaf, psi) in foliation.leaves.iter().zip(&foliation.psi) {
        writer.serialize(LeafRow {
            t: leaf.t,
            htilde: leaf.htilde,
            energy: leaf.energy,
            psi: *psi,
        })?;
    }
    writer.flush().map_err(|e| Error::io(&table, e))?;
    let times = foliation.times();
    let manifest = Manifest {
        leaves: foliation.leaves.len(),
        t_min: times.first().copied().unwrap_or(0.0),
        t_max: times.last().copied().unwrap_or(0.0),
        leaf_table: "foliation.csv",
        min_speed: foliation
            .leaves
            .iter()
            .map(|l| l.min_speed())
            .fold(f64::INFINITY, f64::min),
        min_separation: if foliation.leaves.len() > 1 {
            foliation.min_separation()
        } else {
            0.0
        },
        max_violation: monotonicity.map(|m| m.max_violation),
    };
    let path = dir.join("foliation.json");
    let value = serde_json::to_value(&manifest)?;
    std::fs::write(&path, serde_json::to_string_pretty(&value)?)
        .map_err(|e| Error::io(&path, e))?;
    Ok(vec![table, path])
}
