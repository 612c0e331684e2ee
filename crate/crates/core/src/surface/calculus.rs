//! Discrete surface calculus on the periodic grid.
//!
//! Gradients are one-sided differences averaged over the `2^d` choices of
//! forward/backward direction per axis. The Dirichlet form
//! `D(a, b) = Σ_k c J_k ⟨∇a, ∇b⟩_k` is the primary object and the
//! Laplace–Beltrami operator is defined as its adjoint under the area inner
//! product `⟨a, b⟩ = Σ_k c J_k a_k b_k`, which makes it self-adjoint and
//! annihilate exactly the constants.

use super::PeriodicGrid;

#[derive(Clone, Debug)]
pub struct SurfaceCalculus {
    grid: PeriodicGrid,
    /// Area element `J_k` (the cell volume is applied separately).
    area: Vec<f64>,
    /// Inverse induced metric, `d × d` row-major per node.
    inv_metric: Vec<f64>,
}

impl SurfaceCalculus {
    pub fn new(grid: PeriodicGrid, area: Vec<f64>, inv_metric: Vec<f64>) -> Self {
        let d = grid.dim();
        assert_eq!(area.len(), grid.len());
        assert_eq!(inv_metric.len(), grid.len() * d * d);
        Self {
            grid,
            area,
            inv_metric,
        }
    }

    /// Calculus of the flat metric `scale² δ` (area element `scale^d`).
    pub fn conformally_flat(grid: PeriodicGrid, scale: f64) -> Self {
        let d = grid.dim();
        let n = grid.len();
        let mut inv = vec![0.0; n * d * d];
        for k in 0..n {
            for i in 0..d {
                inv[k * d * d + i * d + i] = 1.0 / (scale * scale);
            }
        }
        Self::new(grid, vec![scale.powi(d as i32); n], inv)
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn area(&self) -> &[f64] {
        &self.area
    }

    /// `c J_k`, the quadrature weight of node `k`.
    pub fn mass(&self) -> Vec<f64> {
        let c = self.grid.cell_volume();
        self.area.iter().map(|j| c * j).collect()
    }

    fn quadrants(&self) -> usize {
        1 << self.grid.dim()
    }

    /// One-sided difference of `a` at `k` along `axis`.
    fn diff(&self, a: &[f64], k: usize, axis: usize, forward: bool) -> f64 {
        let h = self.grid.spacing()[axis];
        if forward {
            (a[self.grid.forward(axis, k)] - a[k]) / h
        } else {
            (a[k] - a[self.grid.backward(axis, k)]) / h
        }
    }

    /// Nodewise `⟨∇a, ∇b⟩`.
    pub fn grad_dot(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        let d = self.grid.dim();
        let q = self.quadrants();
        let mut da = vec![0.0; d];
        let mut db = vec![0.0; d];
        (0..self.grid.len())
            .map(|k| {
                let g = &self.inv_metric[k * d * d..(k + 1) * d * d];
                let mut sum = 0.0;
                for sigma in 0..q {
                    for axis in 0..d {
                        let forward = sigma >> axis & 1 == 1;
                        da[axis] = self.diff(a, k, axis, forward);
                        db[axis] = self.diff(b, k, axis, forward);
                    }
                    for i in 0..d {
                        for j in 0..d {
                            sum += g[i * d + j] * da[i] * db[j];
                        }
                    }
                }
                sum / q as f64
            })
            .collect()
    }

    pub fn grad_norm_sq(&self, a: &[f64]) -> Vec<f64> {
        self.grad_dot(a, a)
    }

    /// `Σ c J a b`.
    pub fn integrate_product(&self, a: &[f64], b: &[f64]) -> f64 {
        let c = self.grid.cell_volume();
        a.iter()
            .zip(b)
            .zip(&self.area)
            .map(|((x, y), j)| c * j * x * y)
            .sum()
    }

    pub fn integrate(&self, a: &[f64]) -> f64 {
        let c = self.grid.cell_volume();
        a.iter().zip(&self.area).map(|(x, j)| c * j * x).sum()
    }

    pub fn dirichlet(&self, a: &[f64], b: &[f64]) -> f64 {
        self.integrate(&self.grad_dot(a, b))
    }

    /// `Δ_Σ a`, defined by `⟨-Δa, b⟩ = D(a, b)` for every `b`.
    pub fn laplacian(&self, a: &[f64]) -> Vec<f64> {
        let d = self.grid.dim();
        let q = self.quadrants();
        let n = self.grid.len();
        let mut acc = vec![0.0; n];
        let mut da = vec![0.0; d];
        for k in 0..n {
            let g = &self.inv_metric[k * d * d..(k + 1) * d * d];
            let weight = self.area[k] / q as f64;
            for sigma in 0..q {
                for axis in 0..d {
                    da[axis] = self.diff(a, k, axis, sigma >> axis & 1 == 1);
                }
                for j in 0..d {
                    let flux: f64 = (0..d).map(|i| g[i * d + j] * da[i]).sum::<f64>() * weight;
                    let flux = flux / self.grid.spacing()[j];
                    if sigma >> j & 1 == 1 {
                        acc[self.grid.forward(j, k)] += flux;
                        acc[k] -= flux;
                    } else {
                        acc[k] += flux;
                        acc[self.grid.backward(j, k)] -= flux;
                    }
                }
            }
        }
        acc.iter().zip(&self.area).map(|(s, j)| -s / j).collect()
    }

    /// Appends the matrix of `D` (scaled by `scale`) as `(row, col, value)`.
    pub(crate) fn dirichlet_triplets(&self, scale: f64, out: &mut Vec<(usize, usize, f64)>) {
        let d = self.grid.dim();
        let q = self.quadrants();
        let c = self.grid.cell_volume();
        for k in 0..self.grid.len() {
            let g = &self.inv_metric[k * d * d..(k + 1) * d * d];
            let weight = scale * c * self.area[k] / q as f64;
            for sigma in 0..q {
                for i in 0..d {
                    let (pi, hi) = self.stencil(k, i, sigma >> i & 1 == 1);
                    for j in 0..d {
                        let coeff = weight * g[i * d + j];
                        if coeff == 0.0 {
                            continue;
                        }
                        let (pj, hj) = self.stencil(k, j, sigma >> j & 1 == 1);
                        for (a, sa) in pi.iter().zip([1.0, -1.0]) {
                            for (b, sb) in pj.iter().zip([1.0, -1.0]) {
                                out.push((*a, *b, coeff * sa * sb / (hi * hj)));
                            }
                        }
                    }
                }
            }
        }
    }

    /// Appends the symmetrized cross form `½ Σ c J γ (ψ⟨∇w,∇χ⟩ + χ⟨∇w,∇ψ⟩)`.
    pub(crate) fn advection_triplets(
        &self,
        w: &[f64],
        scale: f64,
        out: &mut Vec<(usize, usize, f64)>,
    ) {
        let d = self.grid.dim();
        let q = self.quadrants();
        let c = self.grid.cell_volume();
        let mut dw = vec![0.0; d];
        for k in 0..self.grid.len() {
            let g = &self.inv_metric[k * d * d..(k + 1) * d * d];
            let weight = 0.5 * scale * c * self.area[k] / q as f64;
            for sigma in 0..q {
                for axis in 0..d {
                    dw[axis] = self.diff(w, k, axis, sigma >> axis & 1 == 1);
                }
                for j in 0..d {
                    let coeff: f64 = (0..d).map(|i| g[i * d + j] * dw[i]).sum::<f64>() * weight;
                    if coeff == 0.0 {
                        continue;
                    }
                    let (pj, hj) = self.stencil(k, j, sigma >> j & 1 == 1);
                    for (b, sb) in pj.iter().zip([1.0, -1.0]) {
                        let v = coeff * sb / hj;
                        out.push((k, *b, v));
                        out.push((*b, k, v));
                    }
                }
            }
        }
    }

    /// Nodes `[plus, minus]` and spacing of the one-sided difference.
    fn stencil(&self, k: usize, axis: usize, forward: bool) -> ([usize; 2], f64) {
        let h = self.grid.spacing()[axis];
        if forward {
            ([self.grid.forward(axis, k), k], h)
        } else {
            ([k, self.grid.backward(axis, k)], h)
        }
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::TAU;

    use proptest::prelude::*;

    use super::*;

    fn grid(r: usize) -> PeriodicGrid {
        PeriodicGrid::new(vec![r, r], vec![TAU, TAU]).unwrap()
    }

    /// A smooth, non-diagonal metric field for self-adjointness checks.
    fn skewed(r: usize) -> SurfaceCalculus {
        let grid = grid(r);
        let n = grid.len();
        let mut area = Vec::with_capacity(n);
        let mut inv = Vec::with_capacity(4 * n);
        for k in 0..n {
            let x = grid.coords(k);
            let (a, b, c) = (2.0 + x[0].cos(), 0.3 * (x[0] + x[1]).sin(), 1.5 + 0.5 * x[1].sin());
            let det = a * c - b * b;
            area.push(det.sqrt());
            inv.extend([c / det, -b / det, -b / det, a / det]);
        }
        SurfaceCalculus::new(grid, area, inv)
    }

    #[test]
    fn constants_are_harmonic() {
        let calc = skewed(16);
        let lap = calc.laplacian(&vec![2.5; 256]);
        assert!(lap.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn flat_eigenfunction() {
        let calc = SurfaceCalculus::conformally_flat(grid(64), 1.0);
        let phi = calc.grid().sample(|x| x[0].cos());
        let lap = calc.laplacian(&phi);
        let h: f64 = TAU / 64.0;
        let discrete = (2.0 * (h / 2.0).sin() / h).powi(2);
        for (l, p) in lap.iter().zip(&phi) {
            assert!((l + discrete * p).abs() < 1e-12);
            assert!((l + p).abs() < 1e-3);
        }
    }

    #[test]
    fn scaled_slice_eigenvalue() {
        let calc = SurfaceCalculus::conformally_flat(grid(64), 3.0);
        let phi = calc.grid().sample(|x| x[0].cos());
        let lap = calc.laplacian(&phi);
        let err = lap
            .iter()
            .zip(&phi)
            .map(|(l, p)| (l + p / 9.0).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn laplacian_converges_at_second_order() {
        let err = |r| {
            let calc = SurfaceCalculus::conformally_flat(grid(r), 1.0);
            let phi = calc.grid().sample(|x| (x[0] + 2.0 * x[1]).sin());
            calc.laplacian(&phi)
                .iter()
                .zip(&phi)
                .map(|(l, p)| (l + 5.0 * p).abs())
                .fold(0.0, f64::max)
        };
        let ratio = err(32) / err(64);
        assert!((3.8..4.2).contains(&ratio), "{ratio}");
    }

    #[test]
    fn matrix_matches_operator() {
        let calc = skewed(8);
        let mut triplets = Vec::new();
        calc.dirichlet_triplets(1.0, &mut triplets);
        let a = calc.grid().sample(|x| (x[0] - x[1]).sin() + 0.2 * x[1].cos());
        let b = calc.grid().sample(|x| (2.0 * x[0]).cos());
        let quad: f64 = triplets.iter().map(|&(i, j, v)| a[i] * v * b[j]).sum();
        assert!((quad - calc.dirichlet(&a, &b)).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn laplacian_is_self_adjoint(
            a in prop::collection::vec(-1.0f64..1.0, 144),
            b in prop::collection::vec(-1.0f64..1.0, 144),
        ) {
            let calc = skewed(12);
            let lhs = calc.integrate_product(&calc.laplacian(&a), &b);
            let rhs = calc.integrate_product(&a, &calc.laplacian(&b));
            prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
            prop_assert!((lhs + calc.dirichlet(&a, &b)).abs() <= 1e-10 * (1.0 + lhs.abs()));
        }
    }
}
