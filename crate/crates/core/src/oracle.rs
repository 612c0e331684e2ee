//! Finite-difference curvature from raw metric samples.
//!
//! Nothing here touches the closed-form derivative code in [`crate::warp`]:
//! the only shared piece is the evaluation of `f(t)` itself. Christoffel
//! symbols come from central differences of the sampled metric, the Riemann
//! tensor from central differences of those.

use nalgebra::DMatrix;

use crate::error::{ensure_finite, Error, Result};
use crate::warp::WarpedMetricSpec;

pub const MIN_STEP: f64 = 1e-6;
pub const MAX_STEP: f64 = 1e-2;

/// Point of `S¹ × T^d`; coordinates are reduced modulo their periods.
#[derive(Clone, Debug, PartialEq)]
pub struct AmbientPoint {
    pub t: f64,
    pub x: Vec<f64>,
}

impl AmbientPoint {
    pub fn new(spec: &WarpedMetricSpec, t: f64, x: Vec<f64>) -> Result<Self> {
        ensure_finite(t, "t")?;
        let periods = &spec.fiber().periods;
        if x.len() != periods.len() {
            return Err(Error::InvalidInput(format!(
                "point has {} fiber coordinates, fiber dimension is {}",
                x.len(),
                periods.len()
            )));
        }
        let x = x
            .iter()
            .zip(periods)
            .map(|(xi, p)| xi.rem_euclid(*p))
            .collect();
        Ok(Self {
            t: t.rem_euclid(std::f64::consts::TAU),
            x,
        })
    }

    fn coords(&self) -> Vec<f64> {
        std::iter::once(self.t).chain(self.x.iter().copied()).collect()
    }
}

/// Metric components `g_ab` in the coordinate basis `(dt, dx¹, ..., dx^d)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricSample {
    pub components: DMatrix<f64>,
}

pub fn metric_at(spec: &WarpedMetricSpec, p: &AmbientPoint) -> MetricSample {
    MetricSample {
        components: metric_from_coords(spec, &p.coords()),
    }
}

fn metric_from_coords(spec: &WarpedMetricSpec, coords: &[f64]) -> DMatrix<f64> {
    let n = coords.len();
    let f = spec.warp().value(coords[0]);
    let mut g = DMatrix::zeros(n, n);
    g[(0, 0)] = 1.0;
    for i in 1..n {
        g[(i, i)] = f * f;
    }
    g
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleCurvature {
    /// `Ric_ab` in the coordinate basis.
    pub ricci: DMatrix<f64>,
    pub scalar: f64,
}

impl OracleCurvature {
    /// Ricci curvature along the unit vector in coordinate direction `a`.
    pub fn ricci_unit(&self, metric: &MetricSample, a: usize) -> f64 {
        self.ricci[(a, a)] / metric.components[(a, a)]
    }
}

pub fn curvature_fd(spec: &WarpedMetricSpec, p: &AmbientPoint, h: f64) -> Result<OracleCurvature> {
    if !(MIN_STEP..=MAX_STEP).contains(&h) {
        return Err(Error::InvalidInput(format!(
            "oracle step {h:e} outside [{MIN_STEP:e}, {MAX_STEP:e}]"
        )));
    }
    let x = p.coords();
    let n = x.len();

    let gamma0 = christoffel(spec, &x, h);
    // dgamma[c][a][b][e] = ∂_c Γ^a_{be}
    let mut dgamma = vec![vec![vec![vec![0.0; n]; n]; n]; n];
    for (c, slot) in dgamma.iter_mut().enumerate() {
        let plus = christoffel(spec, &shifted(&x, c, h), h);
        let minus = christoffel(spec, &shifted(&x, c, -h), h);
        for a in 0..n {
            for b in 0..n {
                for e in 0..n {
                    slot[a][b][e] = (plus[a][b][e] - minus[a][b][e]) / (2.0 * h);
                }
            }
        }
    }

    // Ric_bd = R^a_{bad} = ∂_a Γ^a_{db} - ∂_d Γ^a_{ab} + Γ^a_{ae} Γ^e_{db} - Γ^a_{de} Γ^e_{ab}
    let mut ricci = DMatrix::zeros(n, n);
    for b in 0..n {
        for d in 0..n {
            let mut sum = 0.0;
            for a in 0..n {
                sum += dgamma[a][a][d][b] - dgamma[d][a][a][b];
                for e in 0..n {
                    sum += gamma0[a][a][e] * gamma0[e][d][b] - gamma0[a][d][e] * gamma0[e][a][b];
                }
            }
            ricci[(b, d)] = sum;
        }
    }

    let g = metric_from_coords(spec, &x);
    let ginv = g
        .try_inverse()
        .ok_or_else(|| Error::InvalidInput("sampled metric is singular".into()))?;
    let scalar = ginv.component_mul(&ricci).sum();
    Ok(OracleCurvature { ricci, scalar })
}

/// Richardson combination `(4 C(h/2) - C(h)) / 3` of two oracle evaluations.
pub fn curvature_fd_richardson(
    spec: &WarpedMetricSpec,
    p: &AmbientPoint,
    h: f64,
) -> Result<OracleCurvature> {
    let coarse = curvature_fd(spec, p, h)?;
    let fine = curvature_fd(spec, p, 0.5 * h)?;
    Ok(OracleCurvature {
        ricci: (fine.ricci * 4.0 - coarse.ricci) / 3.0,
        scalar: (4.0 * fine.scalar - coarse.scalar) / 3.0,
    })
}

fn shifted(x: &[f64], axis: usize, by: f64) -> Vec<f64> {
    let mut y = x.to_vec();
    y[axis] += by;
    y
}

/// `Γ^a_{bc}` at `x` from central differences of the metric.
fn christoffel(spec: &WarpedMetricSpec, x: &[f64], h: f64) -> Vec<Vec<Vec<f64>>> {
    let n = x.len();
    let g = metric_from_coords(spec, x);
    let ginv = g.try_inverse().expect("warped metric is positive definite");
    // dg[c][a][b] = ∂_c g_ab
    let dg: Vec<DMatrix<f64>> = (0..n)
        .map(|c| {
            let plus = metric_from_coords(spec, &shifted(x, c, h));
            let minus = metric_from_coords(spec, &shifted(x, c, -h));
            (plus - minus) / (2.0 * h)
        })
        .collect();
    let mut gamma = vec![vec![vec![0.0; n]; n]; n];
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                let mut sum = 0.0;
                for d in 0..n {
                    sum += ginv[(a, d)] * (dg[b][(d, c)] + dg[c][(d, b)] - dg[d][(b, c)]);
                }
                gamma[a][b][c] = 0.5 * sum;
            }
        }
    }
    gamma
}
