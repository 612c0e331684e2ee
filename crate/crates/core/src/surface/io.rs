//! Surface snapshots and per-node geometry tables.
//!
//! Snapshot JSON: `{"grid": [r_1, ..], "periods": [..], "rho": [..],
//! "metadata": {..}}` with `rho` in flattened order (axis 0 fastest).
//! Geometry CSV columns: `node, rho, area_element, normal_t, mean_curvature,
//! second_fundamental_sq, u, u_nu, grad_sigma_u_sq, w, w_nu`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::geometry::GeometryRow;
use super::{GraphSurface, PeriodicGrid, SurfaceGeometry};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceSnapshot {
    pub grid: Vec<usize>,
    pub periods: Vec<f64>,
    pub rho: Vec<f64>,
    #[serde(default)]
    pub metadata: BTreeMap<String, serde_json::Value>,
}

impl SurfaceSnapshot {
    pub fn of(surface: &GraphSurface) -> Self {
        Self {
            grid: surface.grid().dims().to_vec(),
            periods: surface.grid().periods().to_vec(),
            rho: surface.rho().to_vec(),
            metadata: BTreeMap::new(),
        }
    }

    pub fn with_metadata(mut self, key: &str, value: impl Into<serde_json::Value>) -> Self {
        self.metadata.insert(key.to_owned(), value.into());
        self
    }

    pub fn to_surface(&self) -> Result<GraphSurface> {
        let grid = PeriodicGrid::new(self.grid.clone(), self.periods.clone())?;
        GraphSurface::new(grid, self.rho.clone())
    }
}

pub fn write_snapshot(path: &Path, snapshot: &SurfaceSnapshot) -> Result<()> {
    let text = serde_json::to_string_pretty(snapshot)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_snapshot(path: &Path) -> Result<SurfaceSnapshot> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_geometry_csv(path: &Path, surface: &GraphSurface, geometry: &SurfaceGeometry) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = csv::Writer::from_writer(file);
    for k in 0..geometry.len() {
        writer.serialize(GeometryRow {
            node: k,
            rho: surface.rho()[k],
            area_element: geometry.area_element[k],
            normal_t: geometry.normal_t(k),
            mean_curvature: geometry.mean_curvature[k],
            second_fundamental_sq: geometry.second_fundamental_sq[k],
            u: geometry.u[k],
            u_nu: geometry.u_nu[k],
            grad_sigma_u_sq: geometry.grad_sigma_u_sq[k],
            w: geometry.w[k],
            w_nu: geometry.w_nu[k],
        })?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}
