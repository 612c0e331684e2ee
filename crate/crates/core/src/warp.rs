//! Warped-product ambient geometry with radial data.
//!
//! The ambient manifold is `S¹ × T^d` with metric `g = dt² + f(t)² g_N`, where
//! `g_N` is a flat torus metric (optionally carrying a constant scalar
//! curvature parameter, interpreted as an Einstein fiber). Every quantity here
//! is evaluated in closed form from the Fourier representation of `f`, so
//! derivatives carry no discretization error.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

/// Most Fourier modes retained when a sampled profile is projected.
pub const MAX_MODES: usize = 32;

const MIN_DIM: usize = 3;
const MAX_DIM: usize = 7;

/// Value and first two derivatives of a function of one variable.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
}

impl Jet {
    pub const fn new(value: f64, d1: f64, d2: f64) -> Self {
        Self { value, d1, d2 }
    }

    pub const fn constant(value: f64) -> Self {
        Self::new(value, 0.0, 0.0)
    }

    pub fn mul(self, other: Jet) -> Jet {
        Jet {
            value: self.value * other.value,
            d1: self.d1 * other.value + self.value * other.d1,
            d2: self.d2 * other.value + 2.0 * self.d1 * other.d1 + self.value * other.d2,
        }
    }

    pub fn recip(self) -> Jet {
        let v = self.value;
        Jet {
            value: 1.0 / v,
            d1: -self.d1 / (v * v),
            d2: -self.d2 / (v * v) + 2.0 * self.d1 * self.d1 / (v * v * v),
        }
    }

    /// Logarithmic derivative `h'/h`.
    pub fn log_d1(self) -> f64 {
        self.d1 / self.value
    }
}

/// Truncated Fourier series on period `2π`:
/// `a0 + Σ_k (cos[k-1] cos(k t) + sin[k-1] sin(k t))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FourierSeries {
    pub a0: f64,
    #[serde(default)]
    pub cos: Vec<f64>,
    #[serde(default)]
    pub sin: Vec<f64>,
}

impl FourierSeries {
    pub fn constant(a0: f64) -> Self {
        Self {
            a0,
            cos: Vec::new(),
            sin: Vec::new(),
        }
    }

    pub fn new(a0: f64, cos: Vec<f64>, sin: Vec<f64>) -> Self {
        Self { a0, cos, sin }
    }

    pub fn modes(&self) -> usize {
        self.cos.len().max(self.sin.len())
    }

    fn validate(&self) -> Result<()> {
        if self.modes() > MAX_MODES {
            return Err(Error::InvalidInput(format!(
                "Fourier series has {} modes, at most {MAX_MODES} are supported",
                self.modes()
            )));
        }
        let all_finite = std::iter::once(self.a0)
            .chain(self.cos.iter().copied())
            .chain(self.sin.iter().copied())
            .all(f64::is_finite);
        if !all_finite {
            return Err(Error::NonFinite("Fourier coefficient"));
        }
        Ok(())
    }

    /// Term-by-term evaluation of the series and its first two derivatives.
    pub fn jet(&self, t: f64) -> Jet {
        let mut jet = Jet::constant(self.a0);
        for k in 1..=self.modes() {
            let a = self.cos.get(k - 1).copied().unwrap_or(0.0);
            let b = self.sin.get(k - 1).copied().unwrap_or(0.0);
            let kf = k as f64;
            let (s, c) = (kf * t).sin_cos();
            jet.value += a * c + b * s;
            jet.d1 += kf * (b * c - a * s);
            jet.d2 -= kf * kf * (a * c + b * s);
        }
        jet
    }

    pub fn value(&self, t: f64) -> f64 {
        let mut v = self.a0;
        for k in 1..=self.modes() {
            let a = self.cos.get(k - 1).copied().unwrap_or(0.0);
            let b = self.sin.get(k - 1).copied().unwrap_or(0.0);
            let (s, c) = (k as f64 * t).sin_cos();
            v += a * c + b * s;
        }
        v
    }

    /// Upper bound on `max |h'|` from the coefficients.
    fn derivative_bound(&self) -> f64 {
        (1..=self.modes())
            .map(|k| {
                let a = self.cos.get(k - 1).copied().unwrap_or(0.0);
                let b = self.sin.get(k - 1).copied().unwrap_or(0.0);
                k as f64 * (a.abs() + b.abs())
            })
            .sum()
    }

    /// Certified lower bound on the series over the whole circle: dense
    /// sampling minus the derivative bound times the half spacing.
    pub fn lower_bound(&self) -> f64 {
        const SAMPLES: usize = 4096;
        let sampled_min = (0..SAMPLES)
            .map(|j| self.value(TAU * j as f64 / SAMPLES as f64))
            .fold(f64::INFINITY, f64::min);
        sampled_min - self.derivative_bound() * std::f64::consts::PI / SAMPLES as f64
    }

    /// Projects uniformly spaced samples on `[0, 2π)` onto at most
    /// [`MAX_MODES`] modes.
    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        let n = samples.len();
        if n < 3 {
            return Err(Error::InvalidInput(
                "at least three samples are needed to project a profile".into(),
            ));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite("profile sample"));
        }
        let modes = MAX_MODES.min((n - 1) / 2);
        let scale = 2.0 / n as f64;
        let a0 = samples.iter().sum::<f64>() / n as f64;
        let mut cos = Vec::with_capacity(modes);
        let mut sin = Vec::with_capacity(modes);
        for k in 1..=modes {
            let (mut a, mut b) = (0.0, 0.0);
            for (j, s) in samples.iter().enumerate() {
                let (sn, cs) = (TAU * (k * j) as f64 / n as f64).sin_cos();
                a += s * cs;
                b += s * sn;
            }
            cos.push(a * scale);
            sin.push(b * scale);
        }
        Ok(Self { a0, cos, sin })
    }
}

/// Positive periodic warp profile `f`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WarpProfile {
    series: FourierSeries,
    f_min: f64,
}

impl WarpProfile {
    pub fn new(series: FourierSeries) -> Result<Self> {
        series.validate()?;
        let f_min = series.lower_bound();
        if f_min <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "warp profile is not certified positive (lower bound {f_min:.3e})"
            )));
        }
        Ok(Self { series, f_min })
    }

    pub fn constant(value: f64) -> Result<Self> {
        Self::new(FourierSeries::constant(value))
    }

    /// `f(t) = a + b cos t`, the usual test profile.
    pub fn cosine(a: f64, b: f64) -> Result<Self> {
        Self::new(FourierSeries::new(a, vec![b], Vec::new()))
    }

    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        Self::new(FourierSeries::from_samples(samples)?)
    }

    pub fn series(&self) -> &FourierSeries {
        &self.series
    }

    pub fn f_min(&self) -> f64 {
        self.f_min
    }

    pub fn value(&self, t: f64) -> f64 {
        self.series.value(t)
    }

    pub fn jet(&self, t: f64) -> Jet {
        self.series.jet(t)
    }
}

/// Flat torus fiber `T^d` with the given periods. `scalar_curvature` is the
/// constant `Sc_{g_N}`; when nonzero the fiber is treated as Einstein,
/// `Ric_{g_N} = (Sc_{g_N}/d) g_N`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiberGeometry {
    pub dim: usize,
    pub periods: Vec<f64>,
    pub scalar_curvature: f64,
}

impl FiberGeometry {
    pub fn flat_torus(periods: Vec<f64>) -> Result<Self> {
        let fiber = Self {
            dim: periods.len(),
            periods,
            scalar_curvature: 0.0,
        };
        fiber.validate()?;
        Ok(fiber)
    }

    /// Square torus with all periods `2π`.
    pub fn standard(dim: usize) -> Self {
        Self {
            dim,
            periods: vec![TAU; dim],
            scalar_curvature: 0.0,
        }
    }

    pub fn with_scalar_curvature(mut self, scalar_curvature: f64) -> Self {
        self.scalar_curvature = scalar_curvature;
        self
    }

    pub fn volume(&self) -> f64 {
        self.periods.iter().product()
    }

    fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.periods.len() != self.dim {
            return Err(Error::InvalidInput(format!(
                "fiber of dimension {} needs exactly that many periods (got {})",
                self.dim,
                self.periods.len()
            )));
        }
        if self.periods.iter().any(|p| !p.is_finite() || *p <= 0.0) {
            return Err(Error::InvalidInput("fiber periods must be positive".into()));
        }
        ensure_finite(self.scalar_curvature, "fiber scalar curvature")
    }
}

/// The ambient warped product `(S¹ × N^{n-1}, dt² + f² g_N)` together with
/// the exponent `γ` of the weighted area functional.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WarpedMetricSpec {
    n: usize,
    warp: WarpProfile,
    fiber: FiberGeometry,
    gamma: f64,
}

impl WarpedMetricSpec {
    pub fn new(n: usize, warp: WarpProfile, fiber: FiberGeometry) -> Result<Self> {
        if !(MIN_DIM..=MAX_DIM).contains(&n) {
            return Err(Error::InvalidInput(format!(
                "ambient dimension {n} outside {MIN_DIM}..={MAX_DIM}"
            )));
        }
        fiber.validate()?;
        if fiber.dim + 1 != n {
            return Err(Error::DimensionMismatch {
                n,
                fiber: fiber.dim,
            });
        }
        Ok(Self {
            n,
            warp,
            fiber,
            gamma: (n - 1) as f64,
        })
    }

    /// `f(t) = 2 + cos t` over a standard square torus: the rigid model.
    pub fn model(n: usize) -> Result<Self> {
        Self::new(n, WarpProfile::cosine(2.0, 1.0)?, FiberGeometry::standard(n - 1))
    }

    /// Flat product `f ≡ 1` over a standard square torus.
    pub fn flat(n: usize) -> Result<Self> {
        Self::new(n, WarpProfile::constant(1.0)?, FiberGeometry::standard(n - 1))
    }

    pub fn with_gamma(mut self, gamma: f64) -> Result<Self> {
        ensure_finite(gamma, "gamma")?;
        self.gamma = gamma;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn fiber_dim(&self) -> usize {
        self.n - 1
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn warp(&self) -> &WarpProfile {
        &self.warp
    }

    pub fn fiber(&self) -> &FiberGeometry {
        &self.fiber
    }

    fn check_consistent(&self) -> Result<()> {
        if self.fiber.dim + 1 != self.n {
            return Err(Error::DimensionMismatch {
                n: self.n,
                fiber: self.fiber.dim,
            });
        }
        Ok(())
    }
}

/// Radial weight `u(t) = f(t)^{-p} m(t)` with `p ∈ {0, 1}` and `m` a positive
/// Fourier series. The canonical weight is `u = 1/f`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RadialWeight {
    inverse_warp: bool,
    modulation: Option<FourierSeries>,
}

impl RadialWeight {
    pub fn canonical() -> Self {
        Self {
            inverse_warp: true,
            modulation: None,
        }
    }

    /// `u ≡ 1`.
    pub fn unit() -> Self {
        Self {
            inverse_warp: false,
            modulation: None,
        }
    }

    /// An explicit positive profile `u = m(t)`, independent of `f`.
    pub fn explicit(profile: FourierSeries) -> Result<Self> {
        Self::checked(false, profile)
    }

    /// `u = m(t)/f(t)`: the canonical weight modulated by a positive factor.
    pub fn modulated(modulation: FourierSeries) -> Result<Self> {
        Self::checked(true, modulation)
    }

    fn checked(inverse_warp: bool, profile: FourierSeries) -> Result<Self> {
        profile.validate()?;
        let bound = profile.lower_bound();
        if bound <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "weight profile is not certified positive (lower bound {bound:.3e})"
            )));
        }
        Ok(Self {
            inverse_warp,
            modulation: Some(profile),
        })
    }

    pub fn is_canonical(&self) -> bool {
        self.inverse_warp && self.modulation.is_none()
    }

    pub fn jet(&self, spec: &WarpedMetricSpec, t: f64) -> Jet {
        let base = if self.inverse_warp {
            spec.warp.jet(t).recip()
        } else {
            Jet::constant(1.0)
        };
        match &self.modulation {
            Some(m) => base.mul(m.jet(t)),
            None => base,
        }
    }
}

/// Closed-form Ricci and scalar curvature of the warped product at `t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvatureProfile {
    /// `Ric(∂_t, ∂_t)`.
    pub ric_tt: f64,
    /// Warping part of the coefficient of `⟨X, Y⟩_g` for fiber vectors.
    pub ric_fiber_coeff: f64,
    /// Fiber's own Ricci contribution in the same normalization,
    /// `Sc_{g_N} / (d f²)`; zero for flat fibers.
    pub fiber_ricci: f64,
    pub scalar: f64,
}

impl CurvatureProfile {
    /// Ricci eigenvalue for unit fiber directions.
    pub fn fiber_eigenvalue(&self) -> f64 {
        self.ric_fiber_coeff + self.fiber_ricci
    }

    /// Least Ricci eigenvalue at the point.
    pub fn least_ricci(&self) -> f64 {
        self.ric_tt.min(self.fiber_eigenvalue())
    }

    /// `Ric(ν, ν)` for a unit vector whose `∂_t` component is `nu_t`.
    pub fn ricci_along(&self, nu_t: f64) -> f64 {
        let radial = nu_t * nu_t;
        self.ric_tt * radial + self.fiber_eigenvalue() * (1.0 - radial)
    }
}

pub fn curvature_profile(spec: &WarpedMetricSpec, t: f64) -> Result<CurvatureProfile> {
    ensure_finite(t, "t")?;
    spec.check_consistent()?;
    Ok(curvature_at(spec, spec.warp.jet(t)))
}

pub(crate) fn curvature_at(spec: &WarpedMetricSpec, f: Jet) -> CurvatureProfile {
    let n = spec.n as f64;
    let d = n - 1.0;
    let ddf = f.d2 / f.value;
    let a2 = (f.d1 / f.value).powi(2);
    let f2 = f.value * f.value;
    CurvatureProfile {
        ric_tt: -d * ddf,
        ric_fiber_coeff: -(ddf + (n - 2.0) * a2),
        fiber_ricci: spec.fiber.scalar_curvature / (d * f2),
        scalar: spec.fiber.scalar_curvature / f2 - 2.0 * d * ddf - d * (n - 2.0) * a2,
    }
}

/// `Δ_g h` for a function of `t` alone: `h'' + (n-1)(f'/f) h'`.
pub fn radial_laplacian(spec: &WarpedMetricSpec, h: Jet, t: f64) -> Result<f64> {
    ensure_finite(t, "t")?;
    ensure_finite(h.d1, "h'")?;
    ensure_finite(h.d2, "h''")?;
    Ok(laplacian_at(spec, spec.warp.jet(t), h))
}

pub(crate) fn laplacian_at(spec: &WarpedMetricSpec, f: Jet, h: Jet) -> f64 {
    h.d2 + spec.fiber_dim() as f64 * f.log_d1() * h.d1
}

/// Residual of `-(n-1) f Δ(1/f) + Ric(∂_t,∂_t) = (n-1)(n-3) f^{-2} (f')²`.
pub fn identity_residual_ricci(spec: &WarpedMetricSpec, t: f64) -> Result<f64> {
    let f = spec.warp.jet(t);
    let n = spec.n as f64;
    let curvature = curvature_profile(spec, t)?;
    let lhs = -(n - 1.0) * f.value * radial_laplacian(spec, f.recip(), t)? + curvature.ric_tt;
    let rhs = (n - 1.0) * (n - 3.0) * (f.d1 / f.value).powi(2);
    Ok(lhs - rhs)
}

/// Residual of `-(n-1) f Δ(1/f) + Sc/2 = ((n-1)(n-4)/2) f^{-2} (f')²`, which
/// holds for scalar-flat fibers only.
pub fn identity_residual_scalar(spec: &WarpedMetricSpec, t: f64) -> Result<f64> {
    if spec.fiber.scalar_curvature != 0.0 {
        return Err(Error::InvalidInput(
            "the scalar identity requires a scalar-flat fiber".into(),
        ));
    }
    let f = spec.warp.jet(t);
    let n = spec.n as f64;
    let curvature = curvature_profile(spec, t)?;
    let lhs =
        -(n - 1.0) * f.value * radial_laplacian(spec, f.recip(), t)? + 0.5 * curvature.scalar;
    let rhs = 0.5 * (n - 1.0) * (n - 4.0) * (f.d1 / f.value).powi(2);
    Ok(lhs - rhs)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpectralKind {
    Ricci,
    Scalar,
}

/// Spectral curvature minus the right-hand side of the corresponding
/// hypothesis. `margin >= 0` means the hypothesis holds at that point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralMargin {
    pub margin: f64,
    /// Ricci kind: the `∂_t`-direction expression minus the bound. Scalar
    /// kind: equal to `margin`.
    pub radial: f64,
    /// Ricci kind only: the fiber-direction expression minus the bound.
    pub fiber: Option<f64>,
}

pub fn spectral_condition_margin(
    spec: &WarpedMetricSpec,
    u: &RadialWeight,
    t: f64,
    kind: SpectralKind,
) -> Result<SpectralMargin> {
    if kind == SpectralKind::Scalar {
        check_scalar_kind(spec)?;
    }
    let curvature = curvature_profile(spec, t)?;
    let f = spec.warp.jet(t);
    let w = u.jet(spec, t);
    Ok(margin_at(spec, &curvature, f, w, kind))
}

pub(crate) fn check_scalar_kind(spec: &WarpedMetricSpec) -> Result<()> {
    if spec.n < 4 {
        return Err(Error::Unsupported(format!(
            "the spectral scalar condition needs n >= 4 (got n = {}): the \
             conformal coefficient 2(n-2)/(n-3) is singular at n = 3",
            spec.n
        )));
    }
    if spec.fiber.scalar_curvature != 0.0 {
        return Err(Error::InvalidInput(
            "the spectral scalar condition is evaluated for scalar-flat fibers only".into(),
        ));
    }
    Ok(())
}

/// `-γ u^{-1} Δ_g u` for radial `u`.
pub(crate) fn weight_potential(spec: &WarpedMetricSpec, f: Jet, u: Jet) -> f64 {
    -spec.gamma * laplacian_at(spec, f, u) / u.value
}

pub(crate) fn margin_at(
    spec: &WarpedMetricSpec,
    curvature: &CurvatureProfile,
    f: Jet,
    u: Jet,
    kind: SpectralKind,
) -> SpectralMargin {
    let n = spec.n as f64;
    let gamma = spec.gamma;
    let potential = weight_potential(spec, f, u);
    let grad_sq = u.log_d1().powi(2);
    match kind {
        SpectralKind::Ricci => {
            let bound = (n - 1.0) * (n - 3.0) * grad_sq;
            let radial = potential + curvature.ric_tt - bound;
            let fiber = potential + curvature.fiber_eigenvalue() - bound;
            SpectralMargin {
                margin: radial.min(fiber),
                radial,
                fiber: Some(fiber),
            }
        }
        SpectralKind::Scalar => {
            let bound = 0.5 * gamma * (gamma - 3.0) * grad_sq;
            let margin = potential + 0.5 * curvature.scalar - bound;
            SpectralMargin {
                margin,
                radial: margin,
                fiber: None,
            }
        }
    }
}
