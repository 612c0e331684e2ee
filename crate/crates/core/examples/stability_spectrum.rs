//! Lowest eigenvalues of the stability form on model and flat slices.

use warpmin::stability::stability_spectrum;
use warpmin::surface::{GraphSurface, PeriodicGrid};
use warpmin::warp::{RadialWeight, WarpedMetricSpec};

fn main() -> warpmin::Result<()> {
    let model = WarpedMetricSpec::model(3)?;
    for r in [16, 32, 64] {
        let slice = GraphSurface::slice(PeriodicGrid::uniform(&model, r)?, 0.0)?;
        let s = stability_spectrum(&slice, &model, &RadialWeight::canonical(), 4)?;
        println!(
            "model {r:3}²  ({:?})  λ = {:.3e} {:.8} {:.8}   λ₂ - 1/9 = {:+.2e}",
            s.method,
            s.eigenvalues[0],
            s.eigenvalues[1],
            s.eigenvalues[3],
            s.eigenvalues[1] - 1.0 / 9.0
        );
    }

    let flat = WarpedMetricSpec::flat(3)?;
    let slice = GraphSurface::slice(PeriodicGrid::uniform(&flat, 32)?, 0.0)?;
    let s = stability_spectrum(&slice, &flat, &RadialWeight::unit(), 6)?;
    println!("flat 32²  λ = {:?}", s.eigenvalues);

    // A slice away from t = 0 carries the same spectrum scaled by 1/f².
    let moved = GraphSurface::slice(PeriodicGrid::uniform(&model, 32)?, 1.0)?;
    let s = stability_spectrum(&moved, &model, &RadialWeight::canonical(), 2)?;
    let f = 2.0 + 1f64.cos();
    println!("model slice t = 1: λ₂ = {:.6}, 1/f² = {:.6}", s.eigenvalues[1], 1.0 / (f * f));
    Ok(())
}
