//! Discrete weighted area and its variations.
//!
//! The energy is `E_h = c Σ_k F(ρ_k, s_k)` with `F(t, s) = P(t) √(1 + s Q(t))`,
//! `P = u^γ f^d`, `Q = f⁻²` and `s_k = Σ_i ½[(D⁺_i ρ)² + (D⁻_i ρ)²]`.
//! `H̃` is the exact gradient of `E_h` divided by `c P`, so first variations
//! agree with difference quotients of `E_h` to rounding. It converges to the
//! pointwise `H + γ w_ν` at second order.

use serde::Serialize;

use super::{induced_geometry, GraphSurface, PeriodicGrid, SurfaceGeometry, VariationField};
use crate::error::{Error, Result};
use crate::warp::{RadialWeight, WarpedMetricSpec};

/// `max|H̃|` above which a surface is not treated as weighted minimal.
pub const MINIMALITY_ADVISORY: f64 = 1e-6;

/// Per-node radial data for evaluating `E_h` and its gradient.
pub(crate) struct EnergyKernel<'a> {
    spec: &'a WarpedMetricSpec,
    u: &'a RadialWeight,
    grid: &'a PeriodicGrid,
}

struct Radial {
    p: f64,
    dp: f64,
    q: f64,
    dq: f64,
}

impl<'a> EnergyKernel<'a> {
    pub fn new(spec: &'a WarpedMetricSpec, u: &'a RadialWeight, grid: &'a PeriodicGrid) -> Self {
        Self { spec, u, grid }
    }

    fn radial(&self, t: f64) -> Radial {
        let f = self.spec.warp().jet(t);
        let u = self.u.jet(self.spec, t);
        let gamma = self.spec.gamma();
        let d = self.spec.fiber_dim() as f64;
        let p = u.value.powf(gamma) * f.value.powf(d);
        let q = 1.0 / (f.value * f.value);
        Radial {
            p,
            dp: p * (gamma * u.d1 / u.value + d * f.d1 / f.value),
            q,
            dq: -2.0 * q * f.d1 / f.value,
        }
    }

    /// `f(t)⁻²`, the leading coefficient of the linearized `H̃` map.
    pub fn inverse_f2(&self, t: f64) -> f64 {
        self.radial(t).q
    }

    fn edge(&self, rho: &[f64], axis: usize, k: usize) -> f64 {
        (rho[self.grid.forward(axis, k)] - rho[k]) / self.grid.spacing()[axis]
    }

    /// `s_k` for every node.
    fn slopes(&self, rho: &[f64]) -> Vec<f64> {
        let d = self.grid.dim();
        let mut s = vec![0.0; rho.len()];
        for axis in 0..d {
            for k in 0..rho.len() {
                let e = self.edge(rho, axis, k);
                let half = 0.5 * e * e;
                s[k] += half;
                s[self.grid.forward(axis, k)] += half;
            }
        }
        s
    }

    /// Per-node contributions `c F(ρ_k, s_k)`.
    pub fn energy_terms(&self, rho: &[f64]) -> Vec<f64> {
        let c = self.grid.cell_volume();
        let s = self.slopes(rho);
        rho.iter()
            .zip(&s)
            .map(|(&t, &s)| {
                let r = self.radial(t);
                c * r.p * (1.0 + s * r.q).sqrt()
            })
            .collect()
    }

    pub fn energy(&self, rho: &[f64]) -> f64 {
        compensated_sum(&self.energy_terms(rho))
    }

    /// `W_k = √(1 + s_k / f²)`, the factor turning a normal speed into a
    /// vertical one.
    pub fn normal_factor(&self, rho: &[f64]) -> Vec<f64> {
        let s = self.slopes(rho);
        rho.iter()
            .zip(&s)
            .map(|(&t, &s)| (1.0 + s * self.radial(t).q).sqrt())
            .collect()
    }

    /// `∂E_h/∂ρ_m` together with `c P_m`.
    fn gradient_parts(&self, rho: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let c = self.grid.cell_volume();
        let d = self.grid.dim();
        let s = self.slopes(rho);
        let n = rho.len();
        let mut grad = Vec::with_capacity(n);
        let mut fs = Vec::with_capacity(n);
        let mut cp = Vec::with_capacity(n);
        for k in 0..n {
            let r = self.radial(rho[k]);
            let root = (1.0 + s[k] * r.q).sqrt();
            grad.push(c * (r.dp * root + r.p * s[k] * r.dq / (2.0 * root)));
            fs.push(r.p * r.q / (2.0 * root));
            cp.push(c * r.p);
        }
        for axis in 0..d {
            let h = self.grid.spacing()[axis];
            for k in 0..n {
                let next = self.grid.forward(axis, k);
                // Edge k -> next: δ = (ρ_next - ρ_k)/h, weight F_s(k) + F_s(next).
                let flux = c * (fs[k] + fs[next]) * self.edge(rho, axis, k) / h;
                grad[k] -= flux;
                grad[next] += flux;
            }
        }
        (grad, cp)
    }

    pub fn gradient(&self, rho: &[f64]) -> Vec<f64> {
        self.gradient_parts(rho).0
    }

    pub fn htilde(&self, rho: &[f64]) -> Vec<f64> {
        let (grad, cp) = self.gradient_parts(rho);
        grad.iter().zip(&cp).map(|(g, p)| g / p).collect()
    }
}

pub fn weighted_area(
    surface: &GraphSurface,
    spec: &WarpedMetricSpec,
    u: &RadialWeight,
) -> Result<f64> {
    surface.check_against(spec)?;
    Ok(EnergyKernel::new(spec, u, surface.grid()).energy(surface.rho()))
}

/// Per-node contributions to [`weighted_area`]. Differences of energies of
/// nearby surfaces are best formed term by term from these.
pub fn weighted_area_terms(
    surface: &GraphSurface,
    spec: &WarpedMetricSpec,
    u: &RadialWeight,
) -> Result<Vec<f64>> {
    surface.check_against(spec)?;
    Ok(EnergyKernel::new(spec, u, surface.grid()).energy_terms(surface.rho()))
}

/// Per-node weighted mean curvature `H̃`; zero exactly on critical points of
/// the discrete energy.
pub fn weighted_mean_curvature(
    surface: &GraphSurface,
    spec: &WarpedMetricSpec,
    u: &RadialWeight,
) -> Result<Vec<f64>> {
    surface.check_against(spec)?;
    Ok(htilde_values(surface, spec, u))
}

pub(crate) fn htilde_values(
    surface: &GraphSurface,
    spec: &WarpedMetricSpec,
    u: &RadialWeight,
) -> Vec<f64> {
    EnergyKernel::new(spec, u, surface.grid()).htilde(surface.rho())
}

/// Vertical displacement `φ W` realizing the normal speed `φ`.
pub(crate) fn normal_to_vertical(
    surface: &GraphSurface,
    spec: &WarpedMetricSpec,
    u: &RadialWeight,
    phi: &[f64],
) -> Vec<f64> {
    let w = EnergyKernel::new(spec, u, surface.grid()).normal_factor(surface.rho());
    phi.iter().zip(&w).map(|(p, w)| p * w).collect()
}

/// The surface `ρ + ε φ W` reached by moving with normal speed `φ` for time `ε`
/// to first order.
pub fn normal_deformation(
    surface: &GraphSurface,
    spec: &WarpedMetricSpec,
    u: &RadialWeight,
    phi: &[f64],
    eps: f64,
) -> Result<GraphSurface> {
    surface.check_against(spec)?;
    check_len(surface, phi)?;
    let v = normal_to_vertical(surface, spec, u, phi);
    surface.with_rho(surface.rho().iter().zip(&v).map(|(r, v)| r + eps * v).collect())
}

/// `∫ H̃ φ u^γ dA`, equal to `d/dε E_h(ρ + ε φ W)` at `ε = 0`.
pub fn first_variation(
    surface: &GraphSurface,
    spec: &WarpedMetricSpec,
    u: &RadialWeight,
    field: &VariationField,
) -> Result<f64> {
    surface.check_against(spec)?;
    check_len(surface, &field.phi)?;
    let kernel = EnergyKernel::new(spec, u, surface.grid());
    let rho = surface.rho();
    let grad = kernel.gradient(rho);
    let w = kernel.normal_factor(rho);
    // Σ H̃ φ (c P W) with H̃ = grad / (c P).
    Ok(grad
        .iter()
        .zip(field.phi.iter().zip(&w))
        .map(|(g, (phi, w))| g * phi * w)
        .sum())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SecondVariation {
    /// Quadrature of the second variation in `φ`.
    pub raw: f64,
    /// Quadrature of the same form written in `ψ = φ u^{γ/2}` and `w = log u`.
    pub rewritten: f64,
    /// `max|H̃|` on the surface.
    pub max_htilde: f64,
    /// Set when the surface is not weighted minimal: the forms are then
    /// not the second derivative of the energy.
    pub advisory: bool,
}

pub fn second_variation(
    surface: &GraphSurface,
    spec: &WarpedMetricSpec,
    u: &RadialWeight,
    field: &VariationField,
) -> Result<SecondVariation> {
    let geometry = induced_geometry(surface, spec, u)?;
    check_len(surface, &field.phi)?;
    let max_htilde = htilde_values(surface, spec, u)
        .iter()
        .fold(0.0, |m: f64, h| m.max(h.abs()));
    let (raw, rewritten) = second_variation_forms(&geometry, spec.gamma(), field);
    Ok(SecondVariation {
        raw,
        rewritten,
        max_htilde,
        advisory: max_htilde > MINIMALITY_ADVISORY,
    })
}

pub(crate) fn second_variation_forms(
    g: &SurfaceGeometry,
    gamma: f64,
    field: &VariationField,
) -> (f64, f64) {
    let calc = g.calculus();
    let phi = &field.phi;
    let psi = &field.psi;
    let lap_phi = calc.laplacian(phi);
    let grad_w_phi = calc.grad_dot(&g.w, phi);
    let weight: Vec<f64> = g.u.iter().map(|u| u.powf(gamma)).collect();

    let raw_density: Vec<f64> = (0..g.len())
        .map(|k| {
            let jacobi = -lap_phi[k]
                - (g.second_fundamental_sq[k] + g.ricci_nu[k] + gamma * g.w_nu[k].powi(2)
                    - gamma * g.hess_u_nu[k] / g.u[k])
                    * phi[k]
                - gamma * grad_w_phi[k];
            jacobi * weight[k] * phi[k]
        })
        .collect();
    let raw = calc.integrate(&raw_density);

    let grad_w_psi = calc.grad_dot(&g.w, psi);
    let grad_w_sq = calc.grad_norm_sq(&g.w);
    let potential = rewritten_potential(g, gamma);
    let rewritten_density: Vec<f64> = (0..g.len())
        .map(|k| {
            gamma * psi[k] * grad_w_psi[k]
                + (0.25 * gamma * gamma - gamma) * psi[k] * psi[k] * grad_w_sq[k]
                + potential[k] * psi[k] * psi[k]
        })
        .collect();
    let rewritten = calc.dirichlet(psi, psi) + calc.integrate(&rewritten_density);
    (raw, rewritten)
}

/// `γ u⁻¹ Δ_g u - |A|² - Ric(ν,ν) - γ H w_ν - γ w_ν²` per node.
pub(crate) fn rewritten_potential(g: &SurfaceGeometry, gamma: f64) -> Vec<f64> {
    (0..g.len())
        .map(|k| {
            gamma * g.laplacian_u[k] / g.u[k]
                - g.second_fundamental_sq[k]
                - g.ricci_nu[k]
                - gamma * g.mean_curvature[k] * g.w_nu[k]
                - gamma * g.w_nu[k].powi(2)
        })
        .collect()
}

/// Neumaier summation.
pub(crate) fn compensated_sum(values: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut carry = 0.0;
    for &v in values {
        let t = sum + v;
        carry += if sum.abs() >= v.abs() { (sum - t) + v } else { (v - t) + sum };
        sum = t;
    }
    sum + carry
}

fn check_len(surface: &GraphSurface, phi: &[f64]) -> Result<()> {
    if phi.len() != surface.grid().len() {
        return Err(Error::InvalidInput(format!(
            "variation field has {} values for {} nodes",
            phi.len(),
            surface.grid().len()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use std::f64::consts::{PI, TAU};

    use proptest::prelude::*;

    use super::*;
    use crate::warp::FourierSeries;

    const FOUR_PI_SQ: f64 = 4.0 * PI * PI;

    fn model(r: usize, rho: impl Fn(&[f64]) -> f64) -> (WarpedMetricSpec, GraphSurface) {
        let spec = WarpedMetricSpec::model(3).unwrap();
        let grid = PeriodicGrid::uniform(&spec, r).unwrap();
        (spec, GraphSurface::from_fn(grid, rho).unwrap())
    }

    fn terms(s: &GraphSurface, spec: &WarpedMetricSpec, u: &RadialWeight, phi: &[f64], eps: f64) -> Vec<f64> {
        let v = normal_to_vertical(s, spec, u, phi);
        let rho: Vec<f64> = s.rho().iter().zip(&v).map(|(r, v)| r + eps * v).collect();
        EnergyKernel::new(spec, u, s.grid()).energy_terms(&rho)
    }

    fn first_difference(s: &GraphSurface, spec: &WarpedMetricSpec, u: &RadialWeight, phi: &[f64], eps: f64) -> f64 {
        let (p, m) = (terms(s, spec, u, phi, eps), terms(s, spec, u, phi, -eps));
        p.iter().zip(&m).map(|(a, b)| a - b).sum::<f64>() / (2.0 * eps)
    }

    /// Richardson-extrapolated second difference quotient.
    fn second_difference(s: &GraphSurface, spec: &WarpedMetricSpec, u: &RadialWeight, phi: &[f64], eps: f64) -> f64 {
        let zero = terms(s, spec, u, phi, 0.0);
        let quotient = |e: f64| {
            let (p, m) = (terms(s, spec, u, phi, e), terms(s, spec, u, phi, -e));
            (0..zero.len()).map(|k| (p[k] - zero[k]) + (m[k] - zero[k])).sum::<f64>() / (e * e)
        };
        (4.0 * quotient(0.5 * eps) - quotient(eps)) / 3.0
    }

    #[test]
    fn slice_energy_is_fiber_volume() {
        let u = RadialWeight::canonical();
        for t0 in [0.0, 0.7, 2.0, -1.3] {
            let (spec, s) = model(64, |_| t0);
            let e = weighted_area(&s, &spec, &u).unwrap();
            assert!((e - FOUR_PI_SQ).abs() < 1e-12, "{e}");
        }
        let spec = WarpedMetricSpec::flat(3).unwrap();
        let s = GraphSurface::slice(PeriodicGrid::uniform(&spec, 16).unwrap(), 0.0).unwrap();
        let e = weighted_area(&s, &spec, &RadialWeight::unit()).unwrap();
        assert!((e - FOUR_PI_SQ).abs() < 1e-12);
    }

    #[test]
    fn perturbed_slice_has_more_energy() {
        let (spec, s) = model(64, |x| 0.05 * x[0].cos());
        let e = weighted_area(&s, &spec, &RadialWeight::canonical()).unwrap();
        assert!(e > FOUR_PI_SQ);
    }

    #[test]
    fn slice_htilde_vanishes() {
        let u = RadialWeight::canonical();
        let (spec, s) = model(32, |_| 1.1);
        let h = weighted_mean_curvature(&s, &spec, &u).unwrap();
        assert!(h.iter().all(|v| v.abs() < 1e-12));
        let phi = VariationField::from_fn(&s, &spec, &u, |x| x[0].sin() + x[1].cos().powi(3)).unwrap();
        assert!(first_variation(&s, &spec, &u, &phi).unwrap().abs() < 1e-12);
    }

    #[test]
    fn htilde_tracks_pointwise_formula() {
        let u = RadialWeight::canonical();
        let err = |r| {
            let (spec, s) = model(r, |x| 0.05 * x[0].cos());
            let h = weighted_mean_curvature(&s, &spec, &u).unwrap();
            let g = induced_geometry(&s, &spec, &u).unwrap();
            h.iter()
                .zip(g.pointwise_htilde(spec.gamma()))
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        };
        let (e32, e64) = (err(32), err(64));
        assert!(e64 < 1e-3);
        assert!((3.5..4.5).contains(&(e32 / e64)), "{}", e32 / e64);
    }

    #[test]
    fn first_variation_matches_difference_quotient() {
        let u = RadialWeight::canonical();
        let (spec, s) = model(64, |x| 0.05 * x[0].cos());
        for phi in [
            VariationField::constant(&s, &spec, &u, 1.0).unwrap(),
            VariationField::from_fn(&s, &spec, &u, |x| x[0].cos()).unwrap(),
        ] {
            let fv = first_variation(&s, &spec, &u, &phi).unwrap();
            let fd = first_difference(&s, &spec, &u, &phi.phi, 1e-5);
            assert!((fv - fd).abs() < 1e-8, "{fv} {fd}");
        }
    }

    #[test]
    fn slice_second_variation() {
        let u = RadialWeight::canonical();
        let (spec, s) = model(64, |_| 0.0);
        let one = VariationField::constant(&s, &spec, &u, 1.0).unwrap();
        let sv = second_variation(&s, &spec, &u, &one).unwrap();
        assert!(sv.raw.abs() < 1e-9 && sv.rewritten.abs() < 1e-9);
        assert!(!sv.advisory);

        let cos = VariationField::from_fn(&s, &spec, &u, |x| x[0].cos()).unwrap();
        let sv = second_variation(&s, &spec, &u, &cos).unwrap();
        let g = induced_geometry(&s, &spec, &u).unwrap();
        let expected = g.calculus().dirichlet(&cos.psi, &cos.psi);
        assert!((sv.raw - expected).abs() < 1e-12);
        assert!((sv.rewritten - expected).abs() < 1e-12);
        // Continuum value: ∫|∇ψ|² = u(0)² f(0)^{d-2} · 2π² with u = 1/3.
        assert!((expected - 2.0 * PI * PI / 9.0).abs() < 1e-2);

        let fd = second_difference(&s, &spec, &u, &cos.phi, 1e-3);
        assert!((fd - sv.raw).abs() < 1e-6, "{fd} {}", sv.raw);
    }

    #[test]
    fn flat_second_variation() {
        let spec = WarpedMetricSpec::flat(3).unwrap();
        let u = RadialWeight::unit();
        let s = GraphSurface::slice(PeriodicGrid::uniform(&spec, 64).unwrap(), 0.0).unwrap();
        let cos = VariationField::from_fn(&s, &spec, &u, |x| x[0].cos()).unwrap();
        let sv = second_variation(&s, &spec, &u, &cos).unwrap();
        assert!((sv.raw - 2.0 * PI * PI).abs() < 2e-2);
        let fd = second_difference(&s, &spec, &u, &cos.phi, 1e-3);
        assert!((fd - sv.raw).abs() < 1e-6, "{fd} {}", sv.raw);
    }

    #[test]
    fn advisory_off_minimal() {
        let u = RadialWeight::canonical();
        let (spec, s) = model(32, |x| 0.05 * x[0].cos());
        let phi = VariationField::constant(&s, &spec, &u, 1.0).unwrap();
        assert!(second_variation(&s, &spec, &u, &phi).unwrap().advisory);
    }

    #[test]
    fn modulated_weight_slices() {
        // u = m/f on a slice: H̃ = γ m'/m exactly.
        let spec = WarpedMetricSpec::model(3).unwrap();
        let m = FourierSeries::new(1.0, vec![0.01], vec![]);
        let u = RadialWeight::modulated(m.clone()).unwrap();
        let s = GraphSurface::slice(PeriodicGrid::uniform(&spec, 16).unwrap(), 0.8).unwrap();
        let h = weighted_mean_curvature(&s, &spec, &u).unwrap();
        let jet = m.jet(0.8);
        let expected = 2.0 * jet.d1 / jet.value;
        assert!(h.iter().all(|v| (v - expected).abs() < 1e-14));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(20))]

        #[test]
        fn first_variation_is_exact_derivative(
            c in prop::collection::vec(-0.1f64..0.1, 3),
            p in prop::collection::vec(-1.0f64..1.0, 3),
        ) {
            let u = RadialWeight::canonical();
            let (spec, s) = model(16, |x| c[0] * x[0].cos() + c[1] * x[1].sin() + c[2] * (x[0] - x[1]).cos());
            let phi = VariationField::from_fn(&s, &spec, &u, |x| {
                p[0] + p[1] * x[0].sin() + p[2] * (x[0] + 2.0 * x[1]).cos()
            }).unwrap();
            let fv = first_variation(&s, &spec, &u, &phi).unwrap();
            let fd = first_difference(&s, &spec, &u, &phi.phi, 1e-5);
            prop_assert!((fv - fd).abs() <= 1e-8);
        }
    }

    #[test]
    fn fiber_periods_must_match() {
        let spec = WarpedMetricSpec::model(3).unwrap();
        let grid = PeriodicGrid::new(vec![8, 8], vec![TAU, 1.0]).unwrap();
        let s = GraphSurface::slice(grid, 0.0).unwrap();
        assert!(weighted_area(&s, &spec, &RadialWeight::canonical()).is_err());
    }
}
