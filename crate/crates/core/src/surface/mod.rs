//! Graph hypersurfaces `t = ρ(x)` over the periodic fiber grid.

mod calculus;
mod energy;
mod geometry;
pub mod io;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::warp::{RadialWeight, WarpedMetricSpec};

pub use calculus::SurfaceCalculus;
pub use energy::{
    first_variation, normal_deformation, second_variation, weighted_area, weighted_area_terms, weighted_mean_curvature,
    SecondVariation,
    MINIMALITY_ADVISORY,
};
pub(crate) use energy::{htilde_values, rewritten_potential, EnergyKernel};
pub use geometry::{induced_geometry, laplace_beltrami, SurfaceGeometry};

pub const DEFAULT_NODE_CAP: usize = 16384;
pub const MIN_RESOLUTION: usize = 8;

/// Uniform node-based grid on the flat torus fiber. Node `(i_1, ..., i_d)` sits
/// at `x_a = i_a h_a`; axis 0 varies fastest in the flattened index.
#[derive(Clone, Debug)]
pub struct PeriodicGrid {
    dims: Vec<usize>,
    periods: Vec<f64>,
    spacing: Vec<f64>,
    strides: Vec<usize>,
    // neighbors[axis][0] = backward, neighbors[axis][1] = forward
    neighbors: Vec<[Vec<usize>; 2]>,
}

impl PartialEq for PeriodicGrid {
    fn eq(&self, other: &Self) -> bool {
        self.dims == other.dims && self.periods == other.periods
    }
}

impl PeriodicGrid {
    pub fn new(dims: Vec<usize>, periods: Vec<f64>) -> Result<Self> {
        Self::with_node_cap(dims, periods, DEFAULT_NODE_CAP)
    }

    pub fn with_node_cap(dims: Vec<usize>, periods: Vec<f64>, cap: usize) -> Result<Self> {
        if dims.is_empty() || dims.len() > 3 {
            return Err(Error::Unsupported(format!(
                "grids of dimension {} (supported: 1 to 3)",
                dims.len()
            )));
        }
        if dims.len() != periods.len() {
            return Err(Error::InvalidInput(format!(
                "{} resolutions but {} periods",
                dims.len(),
                periods.len()
            )));
        }
        if let Some(r) = dims.iter().find(|&&r| r < MIN_RESOLUTION) {
            return Err(Error::InvalidInput(format!(
                "resolution {r} below the minimum {MIN_RESOLUTION}"
            )));
        }
        if periods.iter().any(|p| !p.is_finite() || *p <= 0.0) {
            return Err(Error::InvalidInput("grid periods must be positive".into()));
        }
        let len: usize = dims.iter().product();
        if len > cap {
            return Err(Error::InvalidInput(format!(
                "grid has {len} nodes, the cap is {cap}"
            )));
        }
        let spacing = dims
            .iter()
            .zip(&periods)
            .map(|(&r, p)| p / r as f64)
            .collect();
        let mut strides = Vec::with_capacity(dims.len());
        let mut stride = 1;
        for &r in &dims {
            strides.push(stride);
            stride *= r;
        }
        let neighbors = (0..dims.len())
            .map(|axis| {
                let r = dims[axis];
                let s = strides[axis];
                let step = |k: usize, forward: bool| {
                    let i = (k / s) % r;
                    let j = if forward { (i + 1) % r } else { (i + r - 1) % r };
                    k - i * s + j * s
                };
                [
                    (0..len).map(|k| step(k, false)).collect(),
                    (0..len).map(|k| step(k, true)).collect(),
                ]
            })
            .collect();
        Ok(Self {
            dims,
            periods,
            spacing,
            strides,
            neighbors,
        })
    }

    /// Grid covering the fiber of `spec` with the given resolutions.
    pub fn for_fiber(spec: &WarpedMetricSpec, dims: Vec<usize>) -> Result<Self> {
        Self::new(dims, spec.fiber().periods.clone())
    }

    /// `r^d` nodes over the fiber of `spec`.
    pub fn uniform(spec: &WarpedMetricSpec, resolution: usize) -> Result<Self> {
        Self::for_fiber(spec, vec![resolution; spec.fiber_dim()])
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn periods(&self) -> &[f64] {
        &self.periods
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub fn volume(&self) -> f64 {
        self.periods.iter().product()
    }

    /// Multi-index of node `k`.
    pub fn multi_index(&self, k: usize) -> Vec<usize> {
        self.dims
            .iter()
            .zip(&self.strides)
            .map(|(&r, &s)| (k / s) % r)
            .collect()
    }

    pub fn coords(&self, k: usize) -> Vec<f64> {
        self.multi_index(k)
            .iter()
            .zip(&self.spacing)
            .map(|(&i, h)| i as f64 * h)
            .collect()
    }

    pub(crate) fn forward(&self, axis: usize, k: usize) -> usize {
        self.neighbors[axis][1][k]
    }

    pub(crate) fn backward(&self, axis: usize, k: usize) -> usize {
        self.neighbors[axis][0][k]
    }

    /// Samples `field(x)` at every node.
    pub fn sample(&self, field: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        (0..self.len()).map(|k| field(&self.coords(k))).collect()
    }

    /// Node `k` shifted by `offset` along each axis (periodically).
    pub(crate) fn offset(&self, k: usize, offset: &[isize]) -> usize {
        let mut out = 0;
        for (axis, (&r, &s)) in self.dims.iter().zip(&self.strides).enumerate() {
            let i = ((k / s) % r) as isize + offset[axis];
            out += (i.rem_euclid(r as isize) as usize) * s;
        }
        out
    }
}

/// Hypersurface `{t = ρ(x)}` given by nodal heights.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphSurface {
    grid: PeriodicGrid,
    rho: Vec<f64>,
}

impl GraphSurface {
    pub fn new(grid: PeriodicGrid, rho: Vec<f64>) -> Result<Self> {
        if rho.len() != grid.len() {
            return Err(Error::InvalidInput(format!(
                "{} heights for a grid of {} nodes",
                rho.len(),
                grid.len()
            )));
        }
        if rho.iter().any(|r| !r.is_finite()) {
            return Err(Error::NonFinite("graph height"));
        }
        let surface = Self { grid, rho };
        surface.check_chart()?;
        Ok(surface)
    }

    /// Constant-height slice `t = t0`.
    pub fn slice(grid: PeriodicGrid, t0: f64) -> Result<Self> {
        let rho = vec![t0; grid.len()];
        Self::new(grid, rho)
    }

    pub fn from_fn(grid: PeriodicGrid, height: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let rho = grid.sample(height);
        Self::new(grid, rho)
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    pub fn into_rho(self) -> Vec<f64> {
        self.rho
    }

    pub fn mean(&self) -> f64 {
        mean(&self.rho)
    }

    /// `max |ρ - mean(ρ)|`.
    pub fn max_deviation(&self) -> f64 {
        let m = self.mean();
        self.rho.iter().map(|r| (r - m).abs()).fold(0.0, f64::max)
    }

    fn check_chart(&self) -> Result<()> {
        let max_deviation = self.max_deviation();
        if max_deviation >= PI {
            return Err(Error::ChartExit { max_deviation });
        }
        Ok(())
    }

    /// Same grid, new heights.
    pub fn with_rho(&self, rho: Vec<f64>) -> Result<Self> {
        Self::new(self.grid.clone(), rho)
    }

    pub(crate) fn check_against(&self, spec: &WarpedMetricSpec) -> Result<()> {
        if self.grid.dim() != spec.fiber_dim() {
            return Err(Error::DimensionMismatch {
                n: self.grid.dim() + 1,
                fiber: spec.fiber_dim(),
            });
        }
        let fiber = &spec.fiber().periods;
        let same = fiber
            .iter()
            .zip(self.grid.periods())
            .all(|(a, b)| (a - b).abs() <= 1e-12 * a.abs());
        if !same {
            return Err(Error::InvalidInput(
                "grid periods differ from the fiber periods".into(),
            ));
        }
        Ok(())
    }
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Normal speed `φ` on the nodes of a surface together with
/// `ψ = φ u^{γ/2}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariationField {
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
}

impl VariationField {
    pub fn new(
        surface: &GraphSurface,
        spec: &WarpedMetricSpec,
        u: &RadialWeight,
        phi: Vec<f64>,
    ) -> Result<Self> {
        if phi.len() != surface.grid.len() {
            return Err(Error::InvalidInput(format!(
                "variation field has {} values for {} nodes",
                phi.len(),
                surface.grid.len()
            )));
        }
        let half_gamma = 0.5 * spec.gamma();
        let psi = phi
            .iter()
            .zip(&surface.rho)
            .map(|(p, &t)| p * u.jet(spec, t).value.powf(half_gamma))
            .collect();
        Ok(Self { phi, psi })
    }

    pub fn from_fn(
        surface: &GraphSurface,
        spec: &WarpedMetricSpec,
        u: &RadialWeight,
        phi: impl Fn(&[f64]) -> f64,
    ) -> Result<Self> {
        let values = surface.grid.sample(phi);
        Self::new(surface, spec, u, values)
    }

    pub fn constant(
        surface: &GraphSurface,
        spec: &WarpedMetricSpec,
        u: &RadialWeight,
        value: f64,
    ) -> Result<Self> {
        Self::new(surface, spec, u, vec![value; surface.grid.len()])
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::TAU;

    use super::*;

    #[test]
    fn grid_layout() {
        let grid = PeriodicGrid::new(vec![8, 10], vec![TAU, 2.0]).unwrap();
        assert_eq!(grid.len(), 80);
        assert_eq!(grid.multi_index(17), vec![1, 2]);
        assert_eq!(grid.forward(0, 7), 0);
        assert_eq!(grid.backward(1, 3), 3 + 9 * 8);
        assert_eq!(grid.offset(0, &[-2, 1]), 6 + 8);
        assert!((grid.cell_volume() * 80.0 - TAU * 2.0).abs() < 1e-14);
    }

    #[test]
    fn grid_validation() {
        assert!(PeriodicGrid::new(vec![4, 8], vec![1.0, 1.0]).is_err());
        assert!(PeriodicGrid::new(vec![256, 256], vec![1.0, 1.0]).is_err());
        assert!(PeriodicGrid::new(vec![8; 4], vec![1.0; 4]).is_err());
        assert!(PeriodicGrid::with_node_cap(vec![256, 256], vec![1.0, 1.0], 1 << 16).is_ok());
    }

    #[test]
    fn chart_is_enforced() {
        let grid = PeriodicGrid::new(vec![8, 8], vec![TAU, TAU]).unwrap();
        let err = GraphSurface::from_fn(grid.clone(), |x| 3.5 * x[0].cos()).unwrap_err();
        assert!(matches!(err, Error::ChartExit { .. }));
        let nan = GraphSurface::new(grid.clone(), vec![f64::NAN; 64]);
        assert!(matches!(nan, Err(Error::NonFinite(_))));
        assert!(GraphSurface::slice(grid, 40.0).is_ok());
    }

    #[test]
    fn psi_matches_phi_times_weight() {
        let spec = WarpedMetricSpec::model(3).unwrap();
        let grid = PeriodicGrid::uniform(&spec, 8).unwrap();
        let surface = GraphSurface::from_fn(grid, |x| 0.1 * x[0].sin()).unwrap();
        let u = RadialWeight::canonical();
        let field = VariationField::from_fn(&surface, &spec, &u, |x| x[1].cos()).unwrap();
        for (k, &t) in surface.rho().iter().enumerate() {
            let expected = field.phi[k] / spec.warp().value(t);
            assert!((field.psi[k] - expected).abs() < 1e-15);
        }
    }
}
