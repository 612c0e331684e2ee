//! Weighted-area minimization within the graph class.
//!
//! Newton mode solves the bordered system for `(ρ, λ)` with
//! `H̃(ρ) = λ`, `mean(ρ) = m`, then moves the mean `m` until `λ = 0`.
//! Gradient-flow mode moves with normal speed `-H̃` under step control.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{gmres, CsrMatrix, FftPoisson};
use crate::surface::{mean, EnergyKernel, GraphSurface, PeriodicGrid};
use crate::warp::{RadialWeight, WarpedMetricSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMode {
    GradientFlow,
    Newton,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolveOptions {
    pub mode: SolveMode,
    /// Target for `max|H̃|` (or `max|H̃ - λ|` for constrained solves).
    pub tolerance: f64,
    /// Defaults to 50 Newton steps or 500 flow steps.
    pub max_iterations: Option<usize>,
    /// Initial flow step; scaled by `h² min f²` when absent.
    pub initial_step: Option<f64>,
    pub step_growth: f64,
    /// Finite-difference step for the Jacobian.
    pub jacobian_step: f64,
    /// Relative tolerance of the inner GMRES solves.
    pub linear_tolerance: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            mode: SolveMode::Newton,
            tolerance: 1e-10,
            max_iterations: None,
            initial_step: None,
            step_growth: 1.1,
            jacobian_step: 1e-5,
            linear_tolerance: 1e-12,
        }
    }
}

impl SolveOptions {
    pub fn newton() -> Self {
        Self::default()
    }

    pub fn gradient_flow() -> Self {
        Self {
            mode: SolveMode::GradientFlow,
            ..Self::default()
        }
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn with_max_iterations(mut self, iterations: usize) -> Self {
        self.max_iterations = Some(iterations);
        self
    }

    pub fn iterations(&self) -> usize {
        self.max_iterations.unwrap_or(match self.mode {
            SolveMode::Newton => 50,
            SolveMode::GradientFlow => 500,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(Error::InvalidInput("solver tolerance must be positive".into()));
        }
        if self.iterations() == 0 {
            return Err(Error::InvalidInput("at least one iteration is required".into()));
        }
        if !(self.jacobian_step > 0.0 && self.linear_tolerance > 0.0 && self.step_growth >= 1.0) {
            return Err(Error::InvalidInput("invalid step control parameters".into()));
        }
        if self.initial_step.is_some_and(|s| s <= 0.0 || !s.is_finite()) {
            return Err(Error::InvalidInput("initial step must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub energy: f64,
    pub residual: f64,
}

#[derive(Clone, Debug)]
pub struct Minimization {
    pub surface: GraphSurface,
    pub energy: f64,
    pub residual: f64,
    pub iterations: usize,
    pub trace: Vec<TraceRow>,
}

pub fn minimize_weighted_area(
    initial: &GraphSurface,
    spec: &WarpedMetricSpec,
    u: &RadialWeight,
    opts: &SolveOptions,
) -> Result<GraphSurface> {
    minimize_with_trace(initial, spec, u, opts).map(|m| m.surface)
}

pub fn minimize_with_trace(
    initial: &GraphSurface,
    spec: &WarpedMetricSpec,
    u: &RadialWeight,
    opts: &SolveOptions,
) -> Result<Minimization> {
    opts.validate()?;
    initial.check_against(spec)?;
    match opts.mode {
        SolveMode::Newton => newton_minimize(initial, spec, u, opts),
        SolveMode::GradientFlow => gradient_flow(initial, spec, u, opts),
    }
}

fn max_abs(values: &[f64]) -> f64 {
    values.iter().fold(0.0, |m: f64, v| m.max(v.abs()))
}

fn gradient_flow(
    initial: &GraphSurface,
    spec: &WarpedMetricSpec,
    u: &RadialWeight,
    opts: &SolveOptions,
) -> Result<Minimization> {
    let grid = initial.grid();
    let kernel = EnergyKernel::new(spec, u, grid);
    let h_min = grid.spacing().iter().copied().fold(f64::INFINITY, f64::min);
    let mut tau = opts
        .initial_step
        .unwrap_or(0.2 * h_min * h_min * spec.warp().f_min().powi(2));
    let mut rho = initial.rho().to_vec();
    let mut energy = kernel.energy(&rho);
    let mut htilde = kernel.htilde(&rho);
    let mut residual = max_abs(&htilde);
    let mut trace = vec![TraceRow {
        iteration: 0,
        energy,
        residual,
    }];
    let budget = opts.iterations();
    let mut iterations = 0;
    while residual > opts.tolerance && iterations < budget {
        iterations += 1;
        let w = kernel.normal_factor(&rho);
        let mut accepted = false;
        for _ in 0..60 {
            let trial: Vec<f64> = (0..rho.len())
                .map(|k| rho[k] - tau * htilde[k] * w[k])
                .collect();
            let e = kernel.energy(&trial);
            if e <= energy {
                let candidate = initial.with_rho(trial)?;
                rho = candidate.into_rho();
                energy = e;
                tau *= opts.step_growth;
                accepted = true;
                break;
            }
            tau *= 0.5;
        }
        htilde = kernel.htilde(&rho);
        residual = max_abs(&htilde);
        trace.push(TraceRow {
            iteration: iterations,
            energy,
            residual,
        });
        if !accepted {
            break;
        }
    }
    let surface = initial.with_rho(rho)?;
    if residual > opts.tolerance {
        return Err(Error::NonConvergence {
            iterations,
            residual,
            best: Some(Box::new(surface)),
        });
    }
    Ok(Minimization {
        surface,
        energy,
        residual,
        iterations,
        trace,
    })
}

fn newton_minimize(
    initial: &GraphSurface,
    spec: &WarpedMetricSpec,
    u: &RadialWeight,
    opts: &SolveOptions,
) -> Result<Minimization> {
    let grid = initial.grid();
    let kernel = EnergyKernel::new(spec, u, grid);
    let solver = BorderedNewton::new(&kernel, grid, opts);
    let budget = opts.iterations();
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut target = initial.mean();
    let mut rho = initial.rho().to_vec();
    let mut best: Option<(f64, Vec<f64>)> = None;
    loop {
        let leaf = solver.solve(&rho, target, budget - iterations, &mut trace, iterations)?;
        iterations = leaf.iterations;
        rho = leaf.rho;
        let residual = max_abs(&kernel.htilde(&rho));
        if best.as_ref().is_none_or(|(r, _)| residual < *r) {
            best = Some((residual, rho.clone()));
        }
        if residual <= opts.tolerance {
            let surface = initial.with_rho(rho)?;
            return Ok(Minimization {
                energy: kernel.energy(surface.rho()),
                surface,
                residual,
                iterations,
                trace,
            });
        }
        if iterations >= budget {
            break;
        }
        // Newton step on the mean: dλ/dm from the bordered system.
        let jac = solver.jacobian(&rho);
        let mut rhs = vec![0.0; rho.len() + 1];
        rhs[rho.len()] = 1.0;
        let sensitivity = solver.bordered_solve(&jac, &rho, &rhs)?;
        let dlambda = sensitivity[rho.len()];
        if dlambda.abs() < 1e-14 {
            break;
        }
        let shift = -leaf.lambda / dlambda;
        target += shift;
        rho.iter_mut().for_each(|r| *r += shift);
        iterations += 1;
    }
    let (residual, rho) = best.expect("at least one constrained solve ran");
    Err(Error::NonConvergence {
        iterations,
        residual,
        best: Some(Box::new(initial.with_rho(rho)?)),
    })
}

pub(crate) struct ConstrainedSolution {
    pub rho: Vec<f64>,
    pub lambda: f64,
    /// `max|H̃ - λ|`.
    pub residual: f64,
    /// Total iteration count including the offset passed in.
    pub iterations: usize,
}

/// Bordered Newton solver for `H̃(ρ) - λ = 0`, `mean(ρ) = t`.
pub(crate) struct BorderedNewton<'a> {
    kernel: &'a EnergyKernel<'a>,
    grid: &'a PeriodicGrid,
    opts: &'a SolveOptions,
    fft: FftPoisson,
    colors: Coloring,
}

impl<'a> BorderedNewton<'a> {
    pub fn new(kernel: &'a EnergyKernel<'a>, grid: &'a PeriodicGrid, opts: &'a SolveOptions) -> Self {
        Self {
            kernel,
            grid,
            opts,
            fft: FftPoisson::new(grid),
            colors: Coloring::new(grid),
        }
    }

    pub fn jacobian(&self, rho: &[f64]) -> CsrMatrix {
        fd_jacobian(self.kernel, self.grid, &self.colors, rho, self.opts.jacobian_step)
    }

    /// Solves `[J -1; meanᵀ 0] [x; μ] = rhs`.
    pub fn bordered_solve(&self, jac: &CsrMatrix, rho: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
        let n = rho.len();
        let alpha = rho
            .iter()
            .map(|&t| self.kernel.inverse_f2(t))
            .sum::<f64>()
            / n as f64;
        let mut apply = |v: &[f64]| -> Vec<f64> {
            let mut out = jac.matvec(&v[..n]);
            out.iter_mut().for_each(|o| *o -= v[n]);
            out.push(mean(&v[..n]));
            out
        };
        let mut precond = |r: &[f64]| -> Vec<f64> {
            let mr = mean(&r[..n]);
            let centered: Vec<f64> = r[..n].iter().map(|x| x - mr).collect();
            let mut x = self.fft.solve(&centered, alpha, 0.0);
            x.iter_mut().for_each(|v| *v += r[n]);
            x.push(-mr);
            x
        };
        let out = gmres(&mut apply, &mut precond, rhs, self.opts.linear_tolerance, 60, 600);
        if !out.converged && out.relative_residual > 1e-6 {
            return Err(Error::JacobianSingular {
                residual: out.relative_residual,
            });
        }
        Ok(out.x)
    }

    pub fn solve(
        &self,
        start: &[f64],
        target: f64,
        budget: usize,
        trace: &mut Vec<TraceRow>,
        offset: usize,
    ) -> Result<ConstrainedSolution> {
        let n = start.len();
        let shift = target - mean(start);
        let mut rho: Vec<f64> = start.iter().map(|r| r + shift).collect();
        let mut htilde = self.kernel.htilde(&rho);
        let mut lambda = mean(&htilde);
        let residual_of = |h: &[f64], l: f64| h.iter().fold(0.0, |m: f64, v| m.max((v - l).abs()));
        let mut residual = residual_of(&htilde, lambda);
        let mut iterations = offset;
        trace.push(TraceRow {
            iteration: iterations,
            energy: self.kernel.energy(&rho),
            residual,
        });
        let mut stalled = 0;
        while residual > self.opts.tolerance {
            if iterations - offset >= budget {
                return Err(Error::NonConvergence {
                    iterations,
                    residual,
                    best: GraphSurface::new(self.grid.clone(), rho).ok().map(Box::new),
                });
            }
            iterations += 1;
            let jac = self.jacobian(&rho);
            let mut rhs: Vec<f64> = htilde.iter().map(|h| lambda - h).collect();
            rhs.push(target - mean(&rho));
            let step = self.bordered_solve(&jac, &rho, &rhs)?;
            let mut scale = 1.0;
            let mut improved = false;
            for _ in 0..12 {
                let trial: Vec<f64> = (0..n).map(|k| rho[k] + scale * step[k]).collect();
                let trial_lambda = lambda + scale * step[n];
                let trial_h = self.kernel.htilde(&trial);
                let r = residual_of(&trial_h, trial_lambda);
                if r < residual || scale < 1e-3 {
                    GraphSurface::new(self.grid.clone(), trial.clone())?;
                    improved = r < residual;
                    rho = trial;
                    htilde = trial_h;
                    lambda = trial_lambda;
                    residual = r;
                    break;
                }
                scale *= 0.5;
            }
            // Re-impose the linear constraint against rounding drift.
            let drift = target - mean(&rho);
            if drift != 0.0 {
                rho.iter_mut().for_each(|r| *r += drift);
            }
            trace.push(TraceRow {
                iteration: iterations,
                energy: self.kernel.energy(&rho),
                residual,
            });
            stalled = if improved { 0 } else { stalled + 1 };
            if stalled >= 3 {
                return Err(Error::NonConvergence {
                    iterations,
                    residual,
                    best: GraphSurface::new(self.grid.clone(), rho).ok().map(Box::new),
                });
            }
        }
        Ok(ConstrainedSolution {
            rho,
            lambda,
            residual,
            iterations,
        })
    }
}

/// Distance-5 coloring: nodes share a color only if they differ by a
/// multiple of `c_a >= 5` along every axis, so the `|offset|₁ <= 2`
/// dependency stencils of the `H̃` map never overlap within a color.
pub(crate) struct Coloring {
    period: Vec<usize>,
    count: usize,
}

impl Coloring {
    pub fn new(grid: &PeriodicGrid) -> Self {
        let period: Vec<usize> = grid
            .dims()
            .iter()
            .map(|&r| (5..=r).find(|c| r % c == 0).unwrap_or(r))
            .collect();
        let count = period.iter().product();
        Self { period, count }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    fn color(&self, grid: &PeriodicGrid, k: usize) -> usize {
        let mut color = 0;
        let mut stride = 1;
        for (i, p) in grid.multi_index(k).iter().zip(&self.period) {
            color += (i % p) * stride;
            stride *= p;
        }
        color
    }
}

fn stencil_offsets(d: usize) -> Vec<Vec<isize>> {
    let mut out = Vec::new();
    let mut current = vec![-2isize; d];
    loop {
        if current.iter().map(|c| c.abs()).sum::<isize>() <= 2 {
            out.push(current.clone());
        }
        let mut axis = 0;
        loop {
            if axis == d {
                return out;
            }
            current[axis] += 1;
            if current[axis] <= 2 {
                break;
            }
            current[axis] = -2;
            axis += 1;
        }
    }
}

/// Central finite-difference Jacobian of the `H̃` map.
pub(crate) fn fd_jacobian(
    kernel: &EnergyKernel,
    grid: &PeriodicGrid,
    colors: &Coloring,
    rho: &[f64],
    step: f64,
) -> CsrMatrix {
    let n = rho.len();
    let offsets = stencil_offsets(grid.dim());
    let node_colors: Vec<usize> = (0..n).map(|k| colors.color(grid, k)).collect();
    let mut members = vec![Vec::new(); colors.count()];
    for (k, &c) in node_colors.iter().enumerate() {
        members[c].push(k);
    }
    let mut triplets = Vec::with_capacity(n * offsets.len());
    let mut plus = rho.to_vec();
    let mut minus = rho.to_vec();
    for group in &members {
        for &k in group {
            plus[k] = rho[k] + step;
            minus[k] = rho[k] - step;
        }
        let hp = kernel.htilde(&plus);
        let hm = kernel.htilde(&minus);
        for &col in group {
            for off in &offsets {
                let row = grid.offset(col, off);
                let value = (hp[row] - hm[row]) / (2.0 * step);
                if value != 0.0 {
                    triplets.push((row, col, value));
                }
            }
        }
        for &k in group {
            plus[k] = rho[k];
            minus[k] = rho[k];
        }
    }
    CsrMatrix::from_triplets(n, triplets)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::surface::weighted_area;

    fn model(r: usize, rho: impl Fn(&[f64]) -> f64) -> (WarpedMetricSpec, GraphSurface) {
        let spec = WarpedMetricSpec::model(3).unwrap();
        let grid = PeriodicGrid::uniform(&spec, r).unwrap();
        (spec, GraphSurface::from_fn(grid, rho).unwrap())
    }

    #[test]
    fn coloring_periods() {
        let grid = PeriodicGrid::new(vec![64, 9, 10], vec![1.0; 3]).unwrap();
        let c = Coloring::new(&grid);
        assert_eq!(c.period, vec![8, 9, 5]);
        assert_eq!(stencil_offsets(2).len(), 13);
        assert_eq!(stencil_offsets(3).len(), 25);
    }

    #[test]
    fn colored_jacobian_matches_columns() {
        let (spec, s) = model(10, |x| 0.1 * x[0].cos() + 0.05 * (x[0] + x[1]).sin());
        let u = RadialWeight::canonical();
        let kernel = EnergyKernel::new(&spec, &u, s.grid());
        let jac = fd_jacobian(&kernel, s.grid(), &Coloring::new(s.grid()), s.rho(), 1e-5).to_dense();
        for col in [0, 17, 55, 99] {
            let mut p = s.rho().to_vec();
            let mut m = s.rho().to_vec();
            p[col] += 1e-5;
            m[col] -= 1e-5;
            let (hp, hm) = (kernel.htilde(&p), kernel.htilde(&m));
            for row in 0..100 {
                let v = (hp[row] - hm[row]) / 2e-5;
                assert!((jac[(row, col)] - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn slice_is_fixed_point() {
        let (spec, s) = model(16, |_| 0.4);
        let u = RadialWeight::canonical();
        for opts in [SolveOptions::newton(), SolveOptions::gradient_flow()] {
            let out = minimize_weighted_area(&s, &spec, &u, &opts).unwrap();
            assert_eq!(out.rho(), s.rho());
        }
    }

    #[test]
    fn newton_recovers_slice() {
        let (spec, s) = model(32, |x| 0.2 * x[0].cos());
        let u = RadialWeight::canonical();
        let out = minimize_with_trace(&s, &spec, &u, &SolveOptions::newton()).unwrap();
        assert!(out.residual <= 1e-10);
        assert!(out.surface.max_deviation() <= 1e-8);
        assert!((out.energy - 4.0 * PI * PI).abs() <= 1e-8);
        assert!(out.trace.len() < 15);
        let e = weighted_area(&out.surface, &spec, &u).unwrap();
        assert!((e - out.energy).abs() < 1e-12);
    }

    #[test]
    fn newton_residual_decays_quadratically() {
        let (spec, s) = model(16, |x| 0.2 * x[0].cos());
        let u = RadialWeight::canonical();
        let out = minimize_with_trace(&s, &spec, &u, &SolveOptions::newton()).unwrap();
        let r: Vec<f64> = out.trace.iter().map(|t| t.residual).collect();
        // Once in the asymptotic regime, each step at least squares the error
        // up to a modest constant.
        let k = r.iter().position(|&x| x < 1e-3).unwrap();
        assert!(k + 1 < r.len());
        assert!(r[k + 1] <= 10.0 * r[k] * r[k] + 1e-12, "{r:?}");
    }

    #[test]
    fn flat_product_recovers_slice() {
        let spec = WarpedMetricSpec::flat(3).unwrap();
        let grid = PeriodicGrid::uniform(&spec, 32).unwrap();
        let s = GraphSurface::from_fn(grid, |x| 0.2 * x[0].cos()).unwrap();
        let u = RadialWeight::unit();
        let out = minimize_with_trace(&s, &spec, &u, &SolveOptions::newton()).unwrap();
        assert!(out.surface.max_deviation() <= 1e-8);
        assert!((out.energy - 4.0 * PI * PI).abs() <= 1e-8);
    }

    #[test]
    fn gradient_flow_decreases_energy() {
        let (spec, s) = model(16, |x| 0.2 * x[0].cos());
        let u = RadialWeight::canonical();
        let opts = SolveOptions::gradient_flow().with_tolerance(1e-6).with_max_iterations(3000);
        let out = minimize_with_trace(&s, &spec, &u, &opts).unwrap();
        for pair in out.trace.windows(2) {
            assert!(pair[1].energy <= pair[0].energy + 1e-12);
        }
        assert!(out.residual <= 1e-6);
    }

    #[test]
    fn budget_exhaustion_reports_best() {
        let (spec, s) = model(16, |x| 0.2 * x[0].cos());
        let u = RadialWeight::canonical();
        let opts = SolveOptions::gradient_flow().with_max_iterations(3);
        match minimize_weighted_area(&s, &spec, &u, &opts) {
            Err(Error::NonConvergence { iterations, best, .. }) => {
                assert_eq!(iterations, 3);
                assert!(best.is_some());
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn options_are_validated() {
        let (spec, s) = model(8, |_| 0.0);
        let u = RadialWeight::canonical();
        let bad = SolveOptions::newton().with_tolerance(0.0);
        assert!(minimize_weighted_area(&s, &spec, &u, &bad).is_err());
        assert!(SolveOptions::newton().with_max_iterations(0).validate().is_err());
    }
}
