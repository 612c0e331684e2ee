//! Stability spectrum of the rewritten second-variation form, rigidity
//! residuals and the conformal operator on slices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    dense_symmetric_eigen, lowest_eigenpairs, CsrMatrix, FftPoisson, SubspaceOptions,
    DENSE_EIGEN_LIMIT,
};
use crate::surface::{
    htilde_values, induced_geometry, rewritten_potential, GraphSurface, SurfaceCalculus,
    SurfaceGeometry, MINIMALITY_ADVISORY,
};
use crate::warp::{
    check_scalar_kind, curvature_at, margin_at, RadialWeight, SpectralKind, WarpedMetricSpec,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EigenMethod {
    Dense,
    SubspaceIteration,
}

#[derive(Clone, Debug, Serialize)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    /// Nodal eigenfunctions with `Σ c J ψ² = 1`.
    #[serde(skip)]
    pub eigenfunctions: Vec<Vec<f64>>,
    /// `max |Q(ψ) - λ ∫ψ²|` over the returned pairs.
    pub rayleigh_defect: f64,
    pub method: EigenMethod,
}

/// Operator `D + advection + V` of a quadratic form together with its mass.
pub(crate) struct AssembledForm {
    pub matrix: CsrMatrix,
    pub mass: Vec<f64>,
    /// Representative metric scale `mean tr(I⁻¹)/d` for preconditioning.
    pub scale: f64,
    /// Mean of the zeroth-order coefficient.
    pub mean_potential: f64,
}

impl AssembledForm {
    fn new(
        calc: &SurfaceCalculus,
        geometry: &SurfaceGeometry,
        dirichlet_scale: f64,
        advection: Option<(&[f64], f64)>,
        potential: &[f64],
    ) -> Self {
        let n = calc.grid().len();
        let mass = calc.mass();
        let mut triplets = Vec::with_capacity(n * 40);
        calc.dirichlet_triplets(dirichlet_scale, &mut triplets);
        if let Some((w, gamma)) = advection {
            calc.advection_triplets(w, gamma, &mut triplets);
        }
        for k in 0..n {
            triplets.push((k, k, mass[k] * potential[k]));
        }
        let d = geometry.dim;
        let scale = dirichlet_scale
            * (0..n)
                .map(|k| {
                    let inv = geometry.metric_at(k).try_inverse().expect("positive definite");
                    inv.trace() / d as f64
                })
                .sum::<f64>()
            / n as f64;
        Self {
            matrix: CsrMatrix::from_triplets(n, triplets),
            mass,
            scale,
            mean_potential: potential.iter().sum::<f64>() / n as f64,
        }
    }

    /// `Q(ψ) = ψᵀ B ψ`.
    pub fn quadratic(&self, psi: &[f64]) -> f64 {
        crate::linalg::dot(psi, &self.matrix.matvec(psi))
    }

    /// `k` lowest eigenpairs of `B ψ = λ M ψ`.
    fn lowest(&self, calc: &SurfaceCalculus, k: usize) -> Result<Spectrum> {
        let n = self.mass.len();
        if k == 0 || k > n {
            return Err(Error::InvalidInput(format!(
                "requested {k} eigenpairs of an operator of size {n}"
            )));
        }
        let inv_sqrt: Vec<f64> = self.mass.iter().map(|m| 1.0 / m.sqrt()).collect();
        let sym = self.matrix.scaled(&inv_sqrt);
        let (values, vectors, method) = if n <= DENSE_EIGEN_LIMIT {
            let (mut values, mut vectors) = dense_symmetric_eigen(sym.to_dense());
            values.truncate(k);
            vectors.truncate(k);
            (values, vectors, EigenMethod::Dense)
        } else {
            let fft = FftPoisson::new(calc.grid());
            let scale = self.scale;
            let base = self.mean_potential;
            let precond = |r: &[f64], shift: f64| {
                let offset = (base - shift).max(1e-6 * scale);
                fft.solve(r, scale, offset)
            };
            let apply = |v: &[f64]| sym.matvec(v);
            let sqrt_mass: Vec<f64> = self.mass.iter().map(|m| m.sqrt()).collect();
            let start = low_modes(calc, k + 4)
                .into_iter()
                .map(|v| v.iter().zip(&sqrt_mass).map(|(a, b)| a * b).collect())
                .collect();
            let shift = base - 0.05 * scale - 1e-3;
            let opts = SubspaceOptions::default();
            let out = lowest_eigenpairs(&apply, &precond, n, k, shift, start, &opts);
            if !out.converged {
                return Err(Error::NonConvergence {
                    iterations: out.iterations,
                    residual: out.residual,
                    best: None,
                });
            }
            (out.values, out.vectors, EigenMethod::SubspaceIteration)
        };
        let eigenfunctions: Vec<Vec<f64>> = vectors
            .iter()
            .map(|y| y.iter().zip(&inv_sqrt).map(|(a, b)| a * b).collect())
            .collect();
        let rayleigh_defect = eigenfunctions
            .iter()
            .zip(&values)
            .map(|(psi, lambda)| {
                let norm: f64 = psi.iter().zip(&self.mass).map(|(p, m)| m * p * p).sum();
                (self.quadratic(psi) - lambda * norm).abs()
            })
            .fold(0.0, f64::max);
        Ok(Spectrum {
            eigenvalues: values,
            eigenfunctions,
            rayleigh_defect,
            method,
        })
    }
}

/// Constants and the lowest Fourier modes, used as start vectors.
fn low_modes(calc: &SurfaceCalculus, count: usize) -> Vec<Vec<f64>> {
    let grid = calc.grid();
    let mut out = vec![vec![1.0; grid.len()]];
    let mut freq = 1.0;
    while out.len() < count {
        for axis in 0..grid.dim() {
            let p = grid.periods()[axis];
            let scale = std::f64::consts::TAU * freq / p;
            out.push(grid.sample(|x| (scale * x[axis]).cos()));
            out.push(grid.sample(|x| (scale * x[axis]).sin()));
        }
        freq += 1.0;
    }
    out.truncate(count);
    out
}

/// Stability operator coefficients `V = (γ²/4 - γ)|∇w|² + γ u⁻¹Δu - |A|² - Ric(ν,ν) - γ H w_ν - γ w_ν²`.
pub(crate) fn stability_potential(geometry: &SurfaceGeometry, gamma: f64) -> Vec<f64> {
    let grad_w_sq = geometry.calculus().grad_norm_sq(&geometry.w);
    rewritten_potential(geometry, gamma)
        .iter()
        .zip(&grad_w_sq)
        .map(|(v, g)| v + (0.25 * gamma * gamma - gamma) * g)
        .collect()
}

pub(crate) fn stability_form(geometry: &SurfaceGeometry, gamma: f64) -> AssembledForm {
    let potential = stability_potential(geometry, gamma);
    AssembledForm::new(
        geometry.calculus(),
        geometry,
        1.0,
        Some((&geometry.w, gamma)),
        &potential,
    )
}

/// The `k` lowest eigenvalues of the stability form `Q(ψ)` under `∫ψ²`.
pub fn stability_spectrum(
    surface: &GraphSurface,
    spec: &WarpedMetricSpec,
    u: &RadialWeight,
    k: usize,
) -> Result<Spectrum> {
    let geometry = induced_geometry(surface, spec, u)?;
    let residual = htilde_values(surface, spec, u)
        .iter()
        .fold(0.0, |m: f64, h| m.max(h.abs()));
    if residual > MINIMALITY_ADVISORY {
        return Err(Error::NotMinimal {
            residual,
            threshold: MINIMALITY_ADVISORY,
        });
    }
    stability_form(&geometry, spec.gamma()).lowest(geometry.calculus(), k)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RigidityReport {
    pub umbilicity_residual: f64,
    pub tangential_w_residual: f64,
    pub spectral_equality_residual: f64,
    pub htilde_residual: f64,
}

impl RigidityReport {
    pub fn max(&self) -> f64 {
        self.umbilicity_residual
            .max(self.tangential_w_residual)
            .max(self.spectral_equality_residual)
            .max(self.htilde_residual)
    }
}

pub fn rigidity_report(
    surface: &GraphSurface,
    spec: &WarpedMetricSpec,
    u: &RadialWeight,
    kind: SpectralKind,
) -> Result<RigidityReport> {
    if kind == SpectralKind::Scalar {
        check_scalar_kind(spec)?;
    }
    let g = induced_geometry(surface, spec, u)?;
    let max = |it: &mut dyn Iterator<Item = f64>| it.fold(0.0, |m: f64, v| m.max(v.abs()));
    let spectral = match kind {
        SpectralKind::Ricci => max(&mut g.spectral_ricci_defect.iter().copied()),
        SpectralKind::Scalar => max(&mut surface.rho().iter().map(|&t| {
            let f = spec.warp().jet(t);
            margin_at(spec, &curvature_at(spec, f), f, u.jet(spec, t), kind).margin
        })),
    };
    Ok(RigidityReport {
        umbilicity_residual: max(&mut (0..g.len()).map(|k| g.umbilicity_defect(k))),
        tangential_w_residual: max(&mut g.grad_sigma_w_sq().iter().map(|v| v.sqrt())),
        spectral_equality_residual: spectral,
        htilde_residual: max(&mut htilde_values(surface, spec, u).into_iter()),
    })
}

/// Lowest eigenvalues of `-(2(n-2)/(n-3)) Δ_Σ + ½ Sc_Σ` on `surface`, with
/// `Sc_Σ` from the Gauss equation `Sc - 2 Ric(ν,ν) + H² - |A|²`.
pub fn conformal_operator_spectrum(
    spec: &WarpedMetricSpec,
    surface: &GraphSurface,
    k: usize,
) -> Result<Spectrum> {
    let n = spec.n();
    if n == 3 {
        return Err(Error::Unsupported(
            "the conformal operator needs n >= 4: its coefficient 2(n-2)/(n-3) is singular at n = 3"
                .into(),
        ));
    }
    let g = induced_geometry(surface, spec, &RadialWeight::unit())?;
    let coefficient = 2.0 * (n as f64 - 2.0) / (n as f64 - 3.0);
    let half_scalar: Vec<f64> = (0..g.len())
        .map(|k| {
            let h = g.mean_curvature[k];
            0.5 * (g.ambient_scalar[k] - 2.0 * g.ricci_nu[k] + h * h - g.second_fundamental_sq[k])
        })
        .collect();
    AssembledForm::new(g.calculus(), &g, coefficient, None, &half_scalar).lowest(g.calculus(), k)
}
