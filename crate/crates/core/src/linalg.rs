//! Sparse matrices, Krylov solvers, an FFT periodic Poisson solver and the
//! symmetric eigensolvers used by the stability and Newton code.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::surface::PeriodicGrid;

/// Node counts up to this use a dense symmetric eigendecomposition.
pub const DENSE_EIGEN_LIMIT: usize = 1024;

/// Compressed sparse rows; duplicate triplets are summed.
#[derive(Clone, Debug)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0; n + 1];
        let mut cols: Vec<usize> = Vec::with_capacity(triplets.len());
        let mut vals: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last = None;
        for (i, j, v) in triplets {
            if last == Some((i, j)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(j);
                vals.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self {
            n,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[range.clone()]
            .iter()
            .copied()
            .zip(self.vals[range].iter().copied())
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).map(|(j, v)| v * x[j]).sum();
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec_into(x, &mut y);
        y
    }

    /// `D A D` for a diagonal `D`.
    pub fn scaled(&self, d: &[f64]) -> Self {
        let mut out = self.clone();
        for i in 0..self.n {
            for p in out.row_ptr[i]..out.row_ptr[i + 1] {
                out.vals[p] *= d[i] * d[out.cols[p]];
            }
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                m[(i, j)] += v;
            }
        }
        m
    }

    /// `max |A_ij - A_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let entries: HashMap<(usize, usize), f64> = (0..self.n)
            .flat_map(|i| self.row(i).map(move |(j, v)| ((i, j), v)))
            .collect();
        entries
            .iter()
            .map(|(&(i, j), &v)| (v - entries.get(&(j, i)).copied().unwrap_or(0.0)).abs())
            .fold(0.0, f64::max)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[derive(Clone, Debug)]
pub struct KrylovOutcome {
    pub x: Vec<f64>,
    /// Final `‖b - Ax‖ / ‖b‖`.
    pub relative_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Restarted GMRES with right preconditioning `A M⁻¹ y = b`, `x = M⁻¹ y`.
pub fn gmres(
    apply: &mut dyn FnMut(&[f64]) -> Vec<f64>,
    precond: &mut dyn FnMut(&[f64]) -> Vec<f64>,
    b: &[f64],
    tol: f64,
    restart: usize,
    max_iter: usize,
) -> KrylovOutcome {
    let n = b.len();
    let b_norm = norm(b);
    let mut x = vec![0.0; n];
    if b_norm == 0.0 {
        return KrylovOutcome {
            x,
            relative_residual: 0.0,
            iterations: 0,
            converged: true,
        };
    }
    let mut iterations = 0;
    let mut residual = b.to_vec();
    let mut rel = 1.0;
    while iterations < max_iter {
        let beta = norm(&residual);
        rel = beta / b_norm;
        if rel <= tol {
            break;
        }
        let m = restart.min(max_iter - iterations);
        let mut basis: Vec<Vec<f64>> = vec![residual.iter().map(|r| r / beta).collect()];
        let mut z_basis: Vec<Vec<f64>> = Vec::with_capacity(m);
        let mut hess = vec![vec![0.0; m]; m + 1];
        let mut cs = vec![0.0; m];
        let mut sn = vec![0.0; m];
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut used = 0;
        for j in 0..m {
            let z = precond(&basis[j]);
            let mut v = apply(&z);
            z_basis.push(z);
            for (i, q) in basis.iter().enumerate() {
                let h = dot(&v, q);
                hess[i][j] = h;
                axpy(-h, q, &mut v);
            }
            // Second Gram–Schmidt pass for stability.
            for (i, q) in basis.iter().enumerate() {
                let h = dot(&v, q);
                hess[i][j] += h;
                axpy(-h, q, &mut v);
            }
            let h_next = norm(&v);
            hess[j + 1][j] = h_next;
            for i in 0..j {
                let tmp = cs[i] * hess[i][j] + sn[i] * hess[i + 1][j];
                hess[i + 1][j] = -sn[i] * hess[i][j] + cs[i] * hess[i + 1][j];
                hess[i][j] = tmp;
            }
            let denom = hess[j][j].hypot(hess[j + 1][j]);
            if denom == 0.0 {
                used = j;
                break;
            }
            cs[j] = hess[j][j] / denom;
            sn[j] = hess[j + 1][j] / denom;
            hess[j][j] = denom;
            hess[j + 1][j] = 0.0;
            g[j + 1] = -sn[j] * g[j];
            g[j] *= cs[j];
            used = j + 1;
            iterations += 1;
            if g[j + 1].abs() / b_norm <= tol || h_next == 0.0 {
                break;
            }
            basis.push(v.iter().map(|x| x / h_next).collect());
        }
        if used == 0 {
            break;
        }
        let mut y = vec![0.0; used];
        for i in (0..used).rev() {
            let s: f64 = (i + 1..used).map(|k| hess[i][k] * y[k]).sum();
            y[i] = (g[i] - s) / hess[i][i];
        }
        for (yi, z) in y.iter().zip(&z_basis) {
            axpy(*yi, z, &mut x);
        }
        let ax = apply(&x);
        residual = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let new_rel = norm(&residual) / b_norm;
        let stalled = new_rel > 0.999 * rel;
        rel = new_rel;
        if rel <= tol || stalled {
            break;
        }
    }
    KrylovOutcome {
        x,
        relative_residual: rel,
        iterations,
        converged: rel <= tol,
    }
}

/// Conjugate gradients found a direction with `pᵀAp <= 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NegativeCurvature {
    pub curvature: f64,
}

/// Preconditioned conjugate gradients for symmetric positive definite `A`.
pub fn pcg(
    apply: &dyn Fn(&[f64]) -> Vec<f64>,
    precond: &dyn Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<KrylovOutcome, NegativeCurvature> {
    let n = b.len();
    let b_norm = norm(b);
    let mut x = vec![0.0; n];
    if b_norm == 0.0 {
        return Ok(KrylovOutcome {
            x,
            relative_residual: 0.0,
            iterations: 0,
            converged: true,
        });
    }
    let mut r = b.to_vec();
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut rel = 1.0;
    for it in 0..max_iter {
        let ap = apply(&p);
        let curvature = dot(&p, &ap);
        if curvature <= 0.0 {
            return Err(NegativeCurvature { curvature });
        }
        let alpha = rz / curvature;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        rel = norm(&r) / b_norm;
        if rel <= tol {
            return Ok(KrylovOutcome {
                x,
                relative_residual: rel,
                iterations: it + 1,
                converged: true,
            });
        }
        z = precond(&r);
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
    }
    Ok(KrylovOutcome {
        x,
        relative_residual: rel,
        iterations: max_iter,
        converged: false,
    })
}

/// Solves `(scale L + shift) x = r` on the periodic grid, where `L` is the
/// standard second-order negative Laplacian. With `shift == 0` the zero mode
/// is projected out and the mean-free solution returned.
pub struct FftPoisson {
    dims: Vec<usize>,
    strides: Vec<usize>,
    plans: Vec<(Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>)>,
    symbol: Vec<f64>,
    /// `|k|²` with continuous wavenumbers.
    exact_symbol: Vec<f64>,
}

impl FftPoisson {
    pub fn new(grid: &PeriodicGrid) -> Self {
        let dims = grid.dims().to_vec();
        let mut planner = FftPlanner::new();
        let plans = dims
            .iter()
            .map(|&r| (planner.plan_fft_forward(r), planner.plan_fft_inverse(r)))
            .collect();
        let mut strides = Vec::with_capacity(dims.len());
        let mut s = 1;
        for &r in &dims {
            strides.push(s);
            s *= r;
        }
        let symbol = (0..grid.len())
            .map(|k| {
                grid.multi_index(k)
                    .iter()
                    .zip(&dims)
                    .zip(grid.spacing())
                    .map(|((&i, &r), h)| {
                        let theta = std::f64::consts::PI * i as f64 / r as f64;
                        (2.0 * theta.sin() / h).powi(2)
                    })
                    .sum()
            })
            .collect();
        let exact_symbol = (0..grid.len())
            .map(|k| {
                grid.multi_index(k)
                    .iter()
                    .zip(&dims)
                    .zip(grid.periods())
                    .map(|((&i, &r), p)| {
                        let wave = if 2 * i <= r { i as f64 } else { i as f64 - r as f64 };
                        (std::f64::consts::TAU * wave / p).powi(2)
                    })
                    .sum()
            })
            .collect();
        Self {
            dims,
            strides,
            plans,
            symbol,
            exact_symbol,
        }
    }

    /// Eigenvalues of `L` in the flattened Fourier index order.
    pub fn symbol(&self) -> &[f64] {
        &self.symbol
    }

    fn transform(&self, data: &mut [Complex<f64>], inverse: bool) {
        let len = data.len();
        for (axis, &r) in self.dims.iter().enumerate() {
            let stride = self.strides[axis];
            let plan = if inverse {
                &self.plans[axis].1
            } else {
                &self.plans[axis].0
            };
            let mut line = vec![Complex::new(0.0, 0.0); r];
            for start in 0..len {
                if (start / stride) % r != 0 {
                    continue;
                }
                for (i, slot) in line.iter_mut().enumerate() {
                    *slot = data[start + i * stride];
                }
                plan.process(&mut line);
                for (i, v) in line.iter().enumerate() {
                    data[start + i * stride] = *v;
                }
            }
        }
    }

    /// Spectral `-Δ v`, exact for trigonometric polynomials resolved by the grid.
    pub fn spectral_negative_laplacian(&self, v: &[f64]) -> Vec<f64> {
        let mut data: Vec<Complex<f64>> = v.iter().map(|&x| Complex::new(x, 0.0)).collect();
        self.transform(&mut data, false);
        for (d, &lam) in data.iter_mut().zip(&self.exact_symbol) {
            *d *= lam;
        }
        self.transform(&mut data, true);
        let norm = 1.0 / v.len() as f64;
        data.iter().map(|d| d.re * norm).collect()
    }

    pub fn solve(&self, rhs: &[f64], scale: f64, shift: f64) -> Vec<f64> {
        let mut data: Vec<Complex<f64>> = rhs.iter().map(|&v| Complex::new(v, 0.0)).collect();
        self.transform(&mut data, false);
        for (v, &lam) in data.iter_mut().zip(&self.symbol) {
            let denom = scale * lam + shift;
            *v = if denom.abs() < 1e-300 {
                Complex::new(0.0, 0.0)
            } else {
                *v / denom
            };
        }
        self.transform(&mut data, true);
        let norm = 1.0 / rhs.len() as f64;
        data.iter().map(|v| v.re * norm).collect()
    }
}

/// Eigenpairs sorted ascending; eigenvectors are unit columns.
pub fn dense_symmetric_eigen(matrix: DMatrix<f64>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let eig = SymmetricEigen::new(matrix);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = order
        .iter()
        .map(|&i| eig.eigenvectors.column(i).iter().copied().collect())
        .collect();
    (values, vectors)
}

#[derive(Clone, Debug)]
pub struct SubspaceOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub inner_tol: f64,
    pub inner_max_iter: usize,
}

impl Default for SubspaceOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 300,
            inner_tol: 1e-13,
            inner_max_iter: 500,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SubspaceOutcome {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    /// Largest `‖S x - λ x‖` among the returned pairs.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub shift: f64,
}

/// `k` lowest eigenpairs of a symmetric operator by block inverse iteration
/// with shift `shift` (which must lie below the spectrum) and Rayleigh–Ritz.
/// Inner solves use PCG with `precond(r, shift)`. If CG meets negative
/// curvature or a Ritz value falls below the shift, the shift is lowered and
/// the iteration restarted.
pub fn lowest_eigenpairs(
    apply: &dyn Fn(&[f64]) -> Vec<f64>,
    precond: &dyn Fn(&[f64], f64) -> Vec<f64>,
    n: usize,
    k: usize,
    mut shift: f64,
    start: Vec<Vec<f64>>,
    opts: &SubspaceOptions,
) -> SubspaceOutcome {
    let block = (k + 4).max(2 * k).min(n);
    let mut attempts = 0;
    loop {
        attempts += 1;
        match subspace_pass(apply, precond, n, k, block, shift, start.clone(), opts) {
            Ok(out) if out.values.first().is_none_or(|&v| v > shift) || attempts >= 8 => {
                return out
            }
            Ok(out) => shift = out.values[0] - (out.values[0] - shift).abs().max(1e-3),
            Err(()) if attempts < 8 => shift -= shift.abs().max(1e-2) * 2.0,
            Err(()) => {
                return SubspaceOutcome {
                    values: Vec::new(),
                    vectors: Vec::new(),
                    residual: f64::INFINITY,
                    iterations: 0,
                    converged: false,
                    shift,
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn subspace_pass(
    apply: &dyn Fn(&[f64]) -> Vec<f64>,
    precond: &dyn Fn(&[f64], f64) -> Vec<f64>,
    n: usize,
    k: usize,
    block: usize,
    shift: f64,
    start: Vec<Vec<f64>>,
    opts: &SubspaceOptions,
) -> Result<SubspaceOutcome, ()> {
    let mut x = start;
    x.truncate(block);
    let mut salt = 0;
    while x.len() < block {
        salt += 1;
        x.push(scramble(n, salt));
    }
    orthonormalize(&mut x);
    let shifted = |v: &[f64]| -> Vec<f64> {
        let mut out = apply(v);
        axpy(-shift, v, &mut out);
        out
    };
    let pre = |r: &[f64]| precond(r, shift);
    let mut residual = f64::INFINITY;
    let mut values = Vec::new();
    for it in 0..opts.max_iter {
        let mut y = Vec::with_capacity(x.len());
        for col in &x {
            let out = pcg(&shifted, &pre, col, opts.inner_tol, opts.inner_max_iter).map_err(|_| ())?;
            y.push(out.x);
        }
        orthonormalize(&mut y);
        let sy: Vec<Vec<f64>> = y.iter().map(|v| apply(v)).collect();
        let m = y.len();
        let h = DMatrix::from_fn(m, m, |i, j| 0.5 * (dot(&y[i], &sy[j]) + dot(&y[j], &sy[i])));
        let (theta, vecs) = dense_symmetric_eigen(h);
        let combine = |basis: &[Vec<f64>], c: &[f64]| -> Vec<f64> {
            let mut out = vec![0.0; n];
            for (b, ci) in basis.iter().zip(c) {
                axpy(*ci, b, &mut out);
            }
            out
        };
        x = vecs.iter().map(|c| combine(&y, c)).collect();
        let sx: Vec<Vec<f64>> = vecs.iter().map(|c| combine(&sy, c)).collect();
        residual = (0..k.min(m))
            .map(|j| {
                let r: Vec<f64> = sx[j].iter().zip(&x[j]).map(|(a, b)| a - theta[j] * b).collect();
                norm(&r)
            })
            .fold(0.0, f64::max);
        values = theta;
        if residual <= opts.tol {
            values.truncate(k);
            x.truncate(k);
            return Ok(SubspaceOutcome {
                values,
                vectors: x,
                residual,
                iterations: it + 1,
                converged: true,
                shift,
            });
        }
    }
    values.truncate(k);
    x.truncate(k);
    Ok(SubspaceOutcome {
        values,
        vectors: x,
        residual,
        iterations: opts.max_iter,
        converged: false,
        shift,
    })
}

/// Deterministic, well-spread start vector.
fn scramble(n: usize, salt: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let v = ((i as f64 + 1.0) * 12.9898 + salt as f64 * 78.233).sin() * 43758.5453;
            v - v.floor() - 0.5
        })
        .collect()
}

/// Modified Gram–Schmidt, two passes; drops columns that become negligible.
pub fn orthonormalize(cols: &mut Vec<Vec<f64>>) {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(cols.len());
    for mut v in cols.drain(..) {
        let original = norm(&v);
        for _ in 0..2 {
            for q in &out {
                let c = dot(&v, q);
                axpy(-c, q, &mut v);
            }
        }
        let len = norm(&v);
        if len > 1e-10 * original.max(1e-300) {
            v.iter_mut().for_each(|x| *x /= len);
            out.push(v);
        }
    }
    *cols = out;
}
