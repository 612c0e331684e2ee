//! Pointwise induced geometry of a graph `t = ρ(x)`.
//!
//! With `e_i = ρ_i ∂_t + ∂_i` the induced metric is `I_ij = f² δ_ij + ρ_i ρ_j`,
//! the unit normal with positive `∂_t` part is
//! `ν = W⁻¹ (∂_t - f⁻² ρ_i ∂_i)`, `W = √(1 + |∇ρ|²/f²)`, and
//! `A_ij = W⁻¹ (-ρ_ij + f f' δ_ij + 2 (f'/f) ρ_i ρ_j)`.
//! Derivatives of `ρ` are second-order central differences.

use nalgebra::DMatrix;
use serde::Serialize;

use super::{GraphSurface, PeriodicGrid, SurfaceCalculus};
use crate::error::Result;
use crate::warp::{curvature_at, laplacian_at, margin_at, RadialWeight, SpectralKind, WarpedMetricSpec};

/// Per-node geometry. Matrices are stored row-major, `d × d` per node; the
/// normal has `n` components `(ν^t, ν^1, ..., ν^d)` in the coordinate basis.
#[derive(Clone, Debug)]
pub struct SurfaceGeometry {
    pub dim: usize,
    pub induced_metric: Vec<f64>,
    pub area_element: Vec<f64>,
    pub normal: Vec<f64>,
    pub second_fundamental: Vec<f64>,
    pub mean_curvature: Vec<f64>,
    /// `|A|²` measured with the induced metric.
    pub second_fundamental_sq: Vec<f64>,
    pub u: Vec<f64>,
    pub u_nu: Vec<f64>,
    /// `|∇_Σ u|²` from the surface gradient of `u ∘ ρ`.
    pub grad_sigma_u_sq: Vec<f64>,
    /// Ambient `|∇u|² = u'²`.
    pub grad_u_sq: Vec<f64>,
    pub w: Vec<f64>,
    pub w_nu: Vec<f64>,
    /// `Ric(ν, ν)`.
    pub ricci_nu: Vec<f64>,
    /// `Hess u(ν, ν)`.
    pub hess_u_nu: Vec<f64>,
    /// Ambient `Δ_g u`.
    pub laplacian_u: Vec<f64>,
    /// Ambient scalar curvature at the node.
    pub ambient_scalar: Vec<f64>,
    /// `-γ u⁻¹ Δ_g u + Ric(ν,ν) - (n-1)(n-3)|∇w|²`.
    pub spectral_ricci_defect: Vec<f64>,
    calculus: SurfaceCalculus,
}

impl SurfaceGeometry {
    pub fn len(&self) -> usize {
        self.mean_curvature.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean_curvature.is_empty()
    }

    pub fn calculus(&self) -> &SurfaceCalculus {
        &self.calculus
    }

    pub fn grid(&self) -> &PeriodicGrid {
        self.calculus.grid()
    }

    /// `ν^t = ⟨ν, ∂_t⟩ = 1/W`.
    pub fn normal_t(&self, k: usize) -> f64 {
        self.normal[k * (self.dim + 1)]
    }

    pub fn metric_at(&self, k: usize) -> DMatrix<f64> {
        let d = self.dim;
        DMatrix::from_row_slice(d, d, &self.induced_metric[k * d * d..(k + 1) * d * d])
    }

    pub fn second_fundamental_at(&self, k: usize) -> DMatrix<f64> {
        let d = self.dim;
        DMatrix::from_row_slice(d, d, &self.second_fundamental[k * d * d..(k + 1) * d * d])
    }

    /// `H + γ w_ν` evaluated pointwise.
    pub fn pointwise_htilde(&self, gamma: f64) -> Vec<f64> {
        self.mean_curvature
            .iter()
            .zip(&self.w_nu)
            .map(|(h, w)| h + gamma * w)
            .collect()
    }

    /// `|∇_Σ w|² = |∇_Σ u|² / u²`.
    pub fn grad_sigma_w_sq(&self) -> Vec<f64> {
        self.grad_sigma_u_sq
            .iter()
            .zip(&self.u)
            .map(|(g, u)| g / (u * u))
            .collect()
    }

    /// Ambient `|∇w|²`.
    pub fn grad_w_sq(&self) -> Vec<f64> {
        self.grad_u_sq
            .iter()
            .zip(&self.u)
            .map(|(g, u)| g / (u * u))
            .collect()
    }

    /// `g(ν, ν)` at node `k` (one for a unit normal).
    pub fn normal_norm_sq(&self, k: usize, spec: &WarpedMetricSpec, t: f64) -> f64 {
        let f = spec.warp().value(t);
        let nu = &self.normal[k * (self.dim + 1)..(k + 1) * (self.dim + 1)];
        nu[0] * nu[0] + f * f * nu[1..].iter().map(|v| v * v).sum::<f64>()
    }

    /// Norm of the trace-free part `A - (H/d) I` in an orthonormal frame.
    pub fn umbilicity_defect(&self, k: usize) -> f64 {
        let d = self.dim;
        let metric = self.metric_at(k);
        let inv = metric.clone().try_inverse().expect("induced metric is positive definite");
        let b = self.second_fundamental_at(k) - metric * (self.mean_curvature[k] / d as f64);
        let shape = &inv * &b;
        (&shape * &shape).trace().max(0.0).sqrt()
    }
}

pub fn induced_geometry(
    surface: &GraphSurface,
    spec: &WarpedMetricSpec,
    u: &RadialWeight,
) -> Result<SurfaceGeometry> {
    surface.check_against(spec)?;
    let grid = surface.grid();
    let d = grid.dim();
    let len = grid.len();
    let h = grid.spacing();
    let rho = surface.rho();

    let mut g = Geometry::with_capacity(d, len);
    let mut grad = vec![0.0; d];
    let mut hess = vec![0.0; d * d];
    let mut step = vec![0isize; d];
    for k in 0..len {
        for i in 0..d {
            let (p, m) = (grid.forward(i, k), grid.backward(i, k));
            grad[i] = (rho[p] - rho[m]) / (2.0 * h[i]);
            hess[i * d + i] = (rho[p] - 2.0 * rho[k] + rho[m]) / (h[i] * h[i]);
            for j in 0..i {
                let mut corner = |si: isize, sj: isize| {
                    step.iter_mut().for_each(|s| *s = 0);
                    step[i] = si;
                    step[j] = sj;
                    rho[grid.offset(k, &step)]
                };
                let mixed = (corner(1, 1) - corner(1, -1) - corner(-1, 1) + corner(-1, -1))
                    / (4.0 * h[i] * h[j]);
                hess[i * d + j] = mixed;
                hess[j * d + i] = mixed;
            }
        }

        let t = rho[k];
        let f = spec.warp().jet(t);
        let uj = u.jet(spec, t);
        let f2 = f.value * f.value;
        let log_f = f.d1 / f.value;
        let grad_sq: f64 = grad.iter().map(|r| r * r).sum();
        let big_w = (1.0 + grad_sq / f2).sqrt();
        let nu_t = 1.0 / big_w;

        let metric = DMatrix::from_fn(d, d, |i, j| {
            grad[i] * grad[j] + if i == j { f2 } else { 0.0 }
        });
        let sff = DMatrix::from_fn(d, d, |i, j| {
            let diag = if i == j { f.value * f.d1 } else { 0.0 };
            (-hess[i * d + j] + diag + 2.0 * log_f * grad[i] * grad[j]) / big_w
        });
        let inv = metric
            .clone()
            .try_inverse()
            .expect("f² δ + ∇ρ ∇ρᵀ is positive definite");
        let shape = &inv * &sff;
        let grad_v = nalgebra::DVector::from_column_slice(&grad);
        let rho_inv_rho = (grad_v.transpose() * &inv * &grad_v)[(0, 0)];

        let curvature = curvature_at(spec, f);
        let ricci_nu = curvature.ricci_along(nu_t);
        let radial = nu_t * nu_t;
        let hess_u_nu = uj.d2 * radial + uj.d1 * log_f * (1.0 - radial);
        let laplacian_u = laplacian_at(spec, f, uj);
        let w_prime = uj.d1 / uj.value;
        let potential = margin_at(spec, &curvature, f, uj, SpectralKind::Ricci);
        // Replace the radial Ricci term of the margin by Ric(ν, ν).
        let spectral = potential.radial - curvature.ric_tt + ricci_nu;

        g.induced_metric.extend(metric.transpose().iter());
        g.area_element.push(metric.determinant().sqrt());
        g.normal.push(nu_t);
        g.normal.extend(grad.iter().map(|r| -r / (f2 * big_w)));
        g.second_fundamental.extend(sff.transpose().iter());
        g.mean_curvature.push(shape.trace());
        g.second_fundamental_sq.push((&shape * &shape).trace());
        g.u.push(uj.value);
        g.u_nu.push(uj.d1 * nu_t);
        g.grad_sigma_u_sq.push(uj.d1 * uj.d1 * rho_inv_rho);
        g.grad_u_sq.push(uj.d1 * uj.d1);
        g.w.push(uj.value.ln());
        g.w_nu.push(w_prime * nu_t);
        g.ricci_nu.push(ricci_nu);
        g.hess_u_nu.push(hess_u_nu);
        g.laplacian_u.push(laplacian_u);
        g.ambient_scalar.push(curvature.scalar);
        g.spectral_ricci_defect.push(spectral);
        g.inverse_metric.extend(inv.transpose().iter());
    }
    let calculus = SurfaceCalculus::new(grid.clone(), g.area_element.clone(), g.inverse_metric);
    Ok(SurfaceGeometry {
        dim: d,
        induced_metric: g.induced_metric,
        area_element: g.area_element,
        normal: g.normal,
        second_fundamental: g.second_fundamental,
        mean_curvature: g.mean_curvature,
        second_fundamental_sq: g.second_fundamental_sq,
        u: g.u,
        u_nu: g.u_nu,
        grad_sigma_u_sq: g.grad_sigma_u_sq,
        grad_u_sq: g.grad_u_sq,
        w: g.w,
        w_nu: g.w_nu,
        ricci_nu: g.ricci_nu,
        hess_u_nu: g.hess_u_nu,
        laplacian_u: g.laplacian_u,
        ambient_scalar: g.ambient_scalar,
        spectral_ricci_defect: g.spectral_ricci_defect,
        calculus,
    })
}

#[derive(Default)]
struct Geometry {
    induced_metric: Vec<f64>,
    inverse_metric: Vec<f64>,
    area_element: Vec<f64>,
    normal: Vec<f64>,
    second_fundamental: Vec<f64>,
    mean_curvature: Vec<f64>,
    second_fundamental_sq: Vec<f64>,
    u: Vec<f64>,
    u_nu: Vec<f64>,
    grad_sigma_u_sq: Vec<f64>,
    grad_u_sq: Vec<f64>,
    w: Vec<f64>,
    w_nu: Vec<f64>,
    ricci_nu: Vec<f64>,
    hess_u_nu: Vec<f64>,
    laplacian_u: Vec<f64>,
    ambient_scalar: Vec<f64>,
    spectral_ricci_defect: Vec<f64>,
}

impl Geometry {
    fn with_capacity(d: usize, len: usize) -> Self {
        Self {
            induced_metric: Vec::with_capacity(len * d * d),
            inverse_metric: Vec::with_capacity(len * d * d),
            second_fundamental: Vec::with_capacity(len * d * d),
            normal: Vec::with_capacity(len * (d + 1)),
            ..Default::default()
        }
    }
}

/// Discrete `Δ_Σ field` on the surface described by `geometry`.
pub fn laplace_beltrami(geometry: &SurfaceGeometry, field: &[f64]) -> Result<Vec<f64>> {
    if field.len() != geometry.len() {
        return Err(crate::error::Error::InvalidInput(format!(
            "field has {} values for {} nodes",
            field.len(),
            geometry.len()
        )));
    }
    Ok(geometry.calculus.laplacian(field))
}

/// Node-wise report row used by the geometry CSV export.
#[derive(Clone, Debug, Serialize)]
pub(crate) struct GeometryRow {
    pub node: usize,
    pub rho: f64,
    pub area_element: f64,
    pub normal_t: f64,
    pub mean_curvature: f64,
    pub second_fundamental_sq: f64,
    pub u: f64,
    pub u_nu: f64,
    pub grad_sigma_u_sq: f64,
    pub w: f64,
    pub w_nu: f64,
}

#[cfg(test)]
mod tests {
    use std::f64::consts::{FRAC_PI_2, TAU};

    use proptest::prelude::*;

    use super::*;
    use crate::warp::{FourierSeries, WarpProfile, FiberGeometry};

    fn model_surface(r: usize, rho: impl Fn(&[f64]) -> f64) -> (WarpedMetricSpec, GraphSurface) {
        let spec = WarpedMetricSpec::model(3).unwrap();
        let grid = PeriodicGrid::uniform(&spec, r).unwrap();
        (spec, GraphSurface::from_fn(grid, rho).unwrap())
    }

    #[test]
    fn flat_slice_is_totally_geodesic() {
        let spec = WarpedMetricSpec::flat(3).unwrap();
        let grid = PeriodicGrid::uniform(&spec, 16).unwrap();
        let s = GraphSurface::slice(grid, 0.0).unwrap();
        let g = induced_geometry(&s, &spec, &RadialWeight::unit()).unwrap();
        assert!(g.mean_curvature.iter().all(|h| *h == 0.0));
        assert!(g.second_fundamental.iter().all(|a| *a == 0.0));
        for k in 0..g.len() {
            assert_eq!(&g.normal[3 * k..3 * k + 3], &[1.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn model_slices() {
        let (spec, s) = model_surface(16, |_| FRAC_PI_2);
        let g = induced_geometry(&s, &spec, &RadialWeight::canonical()).unwrap();
        assert!(g.mean_curvature.iter().all(|h| (h + 1.0).abs() < 1e-14));
        let (spec, s) = model_surface(16, |_| 0.0);
        let g = induced_geometry(&s, &spec, &RadialWeight::canonical()).unwrap();
        assert!(g.mean_curvature.iter().all(|h| h.abs() < 1e-15));
        assert!(g.second_fundamental.iter().all(|a| a.abs() < 1e-15));
        let htilde = g.pointwise_htilde(spec.gamma());
        assert!(htilde.iter().all(|h| h.abs() < 1e-15));
    }

    #[test]
    fn slice_mean_curvature_converges() {
        // A slightly tilted graph: H differs from the slice value by the
        // discretization of ρ_ij, which converges at second order.
        let err = |r| {
            let (spec, s) = model_surface(r, |x| 0.4 + 0.1 * x[0].sin());
            let coarse = induced_geometry(&s, &spec, &RadialWeight::canonical()).unwrap();
            let (spec, s2) = model_surface(2 * r, |x| 0.4 + 0.1 * x[0].sin());
            let fine = induced_geometry(&s2, &spec, &RadialWeight::canonical()).unwrap();
            // Node k of the coarse grid is node 2k of the fine grid along each axis.
            let fine_r = 2 * r;
            (0..r * r)
                .map(|k| {
                    let (i, j) = (k % r, k / r);
                    (coarse.mean_curvature[k] - fine.mean_curvature[2 * i + 2 * j * fine_r]).abs()
                })
                .fold(0.0, f64::max)
        };
        let ratio = err(32) / err(64);
        assert!((3.6..4.4).contains(&ratio), "{ratio}");
    }

    #[test]
    fn laplace_beltrami_examples() {
        let (spec, s) = model_surface(64, |_| 0.0);
        let g = induced_geometry(&s, &spec, &RadialWeight::canonical()).unwrap();
        let phi = s.grid().sample(|x| x[0].cos());
        let lap = laplace_beltrami(&g, &phi).unwrap();
        let err = lap
            .iter()
            .zip(&phi)
            .map(|(l, p)| (l + p / 9.0).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-4);
        assert!(laplace_beltrami(&g, &vec![1.0; 4096]).unwrap().iter().all(|v| v.abs() < 1e-13));
        assert!(laplace_beltrami(&g, &[1.0]).is_err());
    }

    #[test]
    fn umbilic_slices() {
        let (spec, s) = model_surface(16, |_| 1.3);
        let g = induced_geometry(&s, &spec, &RadialWeight::canonical()).unwrap();
        assert!((0..g.len()).all(|k| g.umbilicity_defect(k) < 1e-14));
        assert!(g.spectral_ricci_defect.iter().all(|v| v.abs() < 1e-13));
    }

    #[test]
    fn dimension_checks() {
        let spec = WarpedMetricSpec::model(4).unwrap();
        let grid = PeriodicGrid::new(vec![8, 8], vec![TAU, TAU]).unwrap();
        let s = GraphSurface::slice(grid, 0.0).unwrap();
        assert!(induced_geometry(&s, &spec, &RadialWeight::canonical()).is_err());
    }

    fn random_surface() -> impl Strategy<Value = (Vec<f64>, f64, usize)> {
        (prop::collection::vec(-0.3f64..0.3, 4), -3.0f64..3.0, 3usize..=4)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn pointwise_invariants((c, t0, n) in random_surface()) {
            let warp = WarpProfile::new(FourierSeries::new(2.0, vec![0.7, 0.2], vec![0.1])).unwrap();
            let spec = WarpedMetricSpec::new(n, warp, FiberGeometry::standard(n - 1)).unwrap();
            let grid = PeriodicGrid::uniform(&spec, 8).unwrap();
            let s = GraphSurface::from_fn(grid, |x| {
                let y = x.get(2).copied().unwrap_or(0.0);
                t0 + c[0] * x[0].cos() + c[1] * (x[1] - y).sin() + c[2] * (x[0] + x[1]).cos() + c[3] * y.sin()
            }).unwrap();
            let u = RadialWeight::modulated(FourierSeries::new(1.0, vec![0.2], vec![0.1])).unwrap();
            let g = induced_geometry(&s, &spec, &u).unwrap();
            for k in 0..g.len() {
                let t = s.rho()[k];
                prop_assert!((g.normal_norm_sq(k, &spec, t) - 1.0).abs() <= 1e-12);
                prop_assert!(g.normal_t(k) > 0.0);
                let a = g.second_fundamental_at(k);
                prop_assert!((&a - a.transpose()).abs().max() <= 1e-12);
                let shape = g.metric_at(k).try_inverse().unwrap() * a;
                prop_assert!((shape.trace() - g.mean_curvature[k]).abs() <= 1e-12);
                let split = g.u_nu[k].powi(2) + g.grad_sigma_u_sq[k];
                prop_assert!((split - g.grad_u_sq[k]).abs() <= 1e-10);
                let w_split = g.grad_w_sq()[k] - g.grad_sigma_w_sq()[k] - g.w_nu[k].powi(2);
                prop_assert!(w_split.abs() <= 1e-10);
            }
        }
    }
}
