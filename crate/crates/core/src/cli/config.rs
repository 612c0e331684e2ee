//! Experiment configuration: one TOML document with a strict schema.
//!
//! ```toml
//! task = "minimize"
//!
//! [ambient]
//! n = 3
//! warp = { a0 = 2.0, cos = [1.0] }
//!
//! [grid]
//! resolution = 64
//!
//! [[surface.modes]]
//! amplitude = 0.2
//! wavevector = [1, 0]
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::minimize::SolveOptions;
use crate::surface::{GraphSurface, PeriodicGrid};
use crate::surface::io::read_snapshot;
use crate::warp::{FiberGeometry, FourierSeries, RadialWeight, SpectralKind, WarpProfile, WarpedMetricSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    VerifyIdentities,
    Curvature,
    Minimize,
    Spectrum,
    Foliate,
    Rigidity,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::VerifyIdentities => "verify-identities",
            Task::Curvature => "curvature",
            Task::Minimize => "minimize",
            Task::Spectrum => "spectrum",
            Task::Foliate => "foliate",
            Task::Rigidity => "rigidity",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
    Text,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: Task,
    pub ambient: AmbientConfig,
    #[serde(default)]
    pub weight: WeightConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub surface: SurfaceConfig,
    #[serde(default)]
    pub solver: SolveOptions,
    #[serde(default)]
    pub identities: IdentitiesParams,
    #[serde(default)]
    pub curvature: CurvatureParams,
    #[serde(default)]
    pub spectrum: SpectrumParams,
    #[serde(default)]
    pub foliation: FoliationParams,
    #[serde(default)]
    pub rigidity: RigidityParams,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmbientConfig {
    pub n: usize,
    /// Defaults to `n - 1`.
    #[serde(default)]
    pub gamma: Option<f64>,
    pub warp: FourierSeries,
    /// Defaults to `2π` in every direction.
    #[serde(default)]
    pub fiber_periods: Option<Vec<f64>>,
    #[serde(default)]
    pub fiber_scalar_curvature: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum WeightConfig {
    /// `u = 1/f`.
    Canonical {},
    Unit {},
    Explicit { profile: FourierSeries },
    /// `u = m/f`.
    Modulated { profile: FourierSeries },
}

impl Default for WeightConfig {
    fn default() -> Self {
        WeightConfig::Canonical {}
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    /// Points per fiber direction; ignored when `dims` is set.
    pub resolution: usize,
    pub dims: Option<Vec<usize>>,
    pub node_cap: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            resolution: 32,
            dims: None,
            node_cap: 16384,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceMode {
    pub amplitude: f64,
    /// Integer wave numbers per fiber direction.
    pub wavevector: Vec<i64>,
}

/// `ρ = height + Σ amplitude cos(2π k·x / P)`, or a snapshot file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurfaceConfig {
    pub height: f64,
    pub modes: Vec<SurfaceMode>,
    pub snapshot: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IdentitiesParams {
    /// Defaults to `[ambient.n]`.
    pub dimensions: Option<Vec<usize>>,
    pub samples: usize,
}

impl Default for IdentitiesParams {
    fn default() -> Self {
        Self {
            dimensions: None,
            samples: 256,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CurvatureParams {
    pub samples: usize,
    pub oracle_points: usize,
    pub oracle_step: f64,
    pub kind: SpectralKind,
}

impl Default for CurvatureParams {
    fn default() -> Self {
        Self {
            samples: 64,
            oracle_points: 16,
            oracle_step: 1e-2,
            kind: SpectralKind::Ricci,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumParams {
    pub count: usize,
    /// Minimize from the configured surface first.
    pub minimize: bool,
}

impl Default for SpectrumParams {
    fn default() -> Self {
        Self {
            count: 4,
            minimize: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FoliationParams {
    pub epsilon: f64,
    pub steps: usize,
    pub linearization: bool,
}

impl Default for FoliationParams {
    fn default() -> Self {
        Self {
            epsilon: 0.3,
            steps: 13,
            linearization: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RigidityParams {
    pub kind: SpectralKind,
    pub minimize: bool,
}

impl Default for RigidityParams {
    fn default() -> Self {
        Self {
            kind: SpectralKind::Ricci,
            minimize: true,
        }
    }
}

/// Verdict thresholds; every one is multiplied by `scale`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub scale: f64,
    pub identity: f64,
    pub oracle: f64,
    pub oracle_order: f64,
    pub htilde: f64,
    pub energy: f64,
    pub deviation: f64,
    pub rigidity: f64,
    pub eigenvalue: f64,
    pub mean: f64,
    pub leaf_htilde: f64,
    pub monotonicity: f64,
    pub linearization: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            scale: 1.0,
            identity: 1e-12,
            oracle: 1e-6,
            oracle_order: 0.2,
            htilde: 1e-10,
            energy: 1e-8,
            deviation: 1e-8,
            rigidity: 1e-6,
            eigenvalue: 1e-8,
            mean: 1e-12,
            leaf_htilde: 1e-9,
            monotonicity: 1e-8,
            linearization: 1e-4,
        }
    }
}

impl Tolerances {
    fn validate(&self) -> Result<()> {
        let fields = [
            ("scale", self.scale),
            ("identity", self.identity),
            ("oracle", self.oracle),
            ("oracle_order", self.oracle_order),
            ("htilde", self.htilde),
            ("energy", self.energy),
            ("deviation", self.deviation),
            ("rigidity", self.rigidity),
            ("eigenvalue", self.eigenvalue),
            ("mean", self.mean),
            ("leaf_htilde", self.leaf_htilde),
            ("monotonicity", self.monotonicity),
            ("linearization", self.linearization),
        ];
        for (name, value) in fields {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::Config(format!(
                    "tolerances.{name}: must be positive and finite (got {value})"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
    pub format: Format,
}

/// Prefixes errors with the offending config key.
fn field<T>(name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{name}.{msg}")),
        other => Error::Config(format!("{name}: {other}")),
    })
}

impl ExperimentConfig {
    /// The rigid model `f = 2 + cos t`, `u = 1/f` at 32² with the given task.
    pub fn model(task: Task) -> Self {
        Self {
            task,
            ambient: AmbientConfig {
                n: 3,
                gamma: None,
                warp: FourierSeries::new(2.0, vec![1.0], vec![]),
                fiber_periods: None,
                fiber_scalar_curvature: 0.0,
            },
            weight: WeightConfig::Canonical {},
            grid: GridConfig::default(),
            surface: SurfaceConfig::default(),
            solver: SolveOptions::default(),
            identities: IdentitiesParams::default(),
            curvature: CurvatureParams::default(),
            spectrum: SpectrumParams::default(),
            foliation: FoliationParams::default(),
            rigidity: RigidityParams::default(),
            tolerances: Tolerances::default(),
            output: OutputConfig::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Builds every derived object once so errors surface before any
    /// computation starts.
    pub fn validate(&self) -> Result<()> {
        let spec = self.spec()?;
        self.weight()?;
        if let Some(dims) = &self.identities.dimensions {
            for &n in dims {
                field("identities.dimensions", self.spec_with_dimension(n).map(|_| ()))?;
            }
        }
        if self.identities.samples == 0 {
            return Err(Error::Config("identities.samples: must be positive".into()));
        }
        if self.curvature.samples == 0 {
            return Err(Error::Config("curvature.samples: must be positive".into()));
        }
        if !(self.curvature.oracle_step > 0.0) {
            return Err(Error::Config("curvature.oracle_step: must be positive".into()));
        }
        if self.spectrum.count == 0 {
            return Err(Error::Config("spectrum.count: must be positive".into()));
        }
        if !(self.foliation.epsilon >= 0.0 && self.foliation.epsilon.is_finite()) {
            return Err(Error::Config("foliation.epsilon: must be nonnegative".into()));
        }
        if self.foliation.steps == 0 {
            return Err(Error::Config("foliation.steps: must be positive".into()));
        }
        field("solver", self.solver.validate())?;
        self.tolerances.validate()?;
        let grid = self.grid(&spec)?;
        for mode in &self.surface.modes {
            if mode.wavevector.len() != grid.dim() {
                return Err(Error::Config(format!(
                    "surface.modes: wavevector has {} entries, the fiber has dimension {}",
                    mode.wavevector.len(),
                    grid.dim()
                )));
            }
            if !mode.amplitude.is_finite() {
                return Err(Error::Config("surface.modes: amplitude must be finite".into()));
            }
        }
        if self.surface.snapshot.is_none() {
            self.surface(&spec)?;
        }
        Ok(())
    }

    pub fn spec(&self) -> Result<WarpedMetricSpec> {
        field("ambient", self.spec_with_dimension(self.ambient.n))
    }

    fn spec_with_dimension(&self, n: usize) -> Result<WarpedMetricSpec> {
        let a = &self.ambient;
        let warp = field("warp", WarpProfile::new(a.warp.clone()))?;
        let fiber = match &a.fiber_periods {
            Some(p) if n == a.n => FiberGeometry::flat_torus(p.clone())?,
            _ => FiberGeometry::standard(n.max(2) - 1),
        }
        .with_scalar_curvature(a.fiber_scalar_curvature);
        let spec = WarpedMetricSpec::new(n, warp, fiber)?;
        match a.gamma {
            Some(g) => field("gamma", spec.with_gamma(g)),
            None => Ok(spec),
        }
    }

    /// Specs for the identity sweep.
    pub fn identity_specs(&self) -> Result<Vec<WarpedMetricSpec>> {
        match &self.identities.dimensions {
            None => Ok(vec![self.spec()?]),
            Some(dims) => dims
                .iter()
                .map(|&n| field("identities.dimensions", self.spec_with_dimension(n)))
                .collect(),
        }
    }

    pub fn weight(&self) -> Result<RadialWeight> {
        field(
            "weight",
            match &self.weight {
                WeightConfig::Canonical {} => Ok(RadialWeight::canonical()),
                WeightConfig::Unit {} => Ok(RadialWeight::unit()),
                WeightConfig::Explicit { profile } => RadialWeight::explicit(profile.clone()),
                WeightConfig::Modulated { profile } => RadialWeight::modulated(profile.clone()),
            },
        )
    }

    pub fn grid(&self, spec: &WarpedMetricSpec) -> Result<PeriodicGrid> {
        let dims = self
            .grid
            .dims
            .clone()
            .unwrap_or_else(|| vec![self.grid.resolution; spec.fiber_dim()]);
        field(
            "grid",
            PeriodicGrid::with_node_cap(dims, spec.fiber().periods.clone(), self.grid.node_cap),
        )
    }

    /// The initial surface described by `[surface]`.
    pub fn surface(&self, spec: &WarpedMetricSpec) -> Result<GraphSurface> {
        if let Some(path) = &self.surface.snapshot {
            let surface = read_snapshot(path)?.to_surface()?;
            field("surface.snapshot", surface.check_against(spec))?;
            return Ok(surface);
        }
        let grid = self.grid(spec)?;
        let modes: Vec<(f64, Vec<f64>)> = self
            .surface
            .modes
            .iter()
            .map(|m| {
                let k = m
                    .wavevector
                    .iter()
                    .zip(grid.periods())
                    .map(|(&k, p)| std::f64::consts::TAU * k as f64 / p)
                    .collect();
                (m.amplitude, k)
            })
            .collect();
        let height = self.surface.height;
        field(
            "surface",
            GraphSurface::from_fn(grid, |x| {
                height
                    + modes
                        .iter()
                        .map(|(a, k)| a * k.iter().zip(x).map(|(k, x)| k * x).sum::<f64>().cos())
                        .sum::<f64>()
            }),
        )
    }

    /// The rigid configuration: `u = 1/f` with `γ = n - 1`.
    pub fn is_rigid_model(&self, spec: &WarpedMetricSpec) -> bool {
        matches!(self.weight, WeightConfig::Canonical {}) && spec.gamma() == (spec.n() - 1) as f64
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output.dir.clone().unwrap_or_else(|| PathBuf::from("warpmin-out"))
    }
}
