//! The conformal operator `-(2(n-2)/(n-3)) Δ + ½ Sc` on slices.

use warpmin::stability::conformal_operator_spectrum;
use warpmin::surface::{GraphSurface, PeriodicGrid};
use warpmin::warp::WarpedMetricSpec;

fn main() -> warpmin::Result<()> {
    let flat = WarpedMetricSpec::flat(4)?;
    let slice = GraphSurface::slice(PeriodicGrid::uniform(&flat, 16)?, 0.0)?;
    let s = conformal_operator_spectrum(&flat, &slice, 8)?;
    println!("flat T³ (16³, {:?}): {:?}", s.method, s.eigenvalues);

    // Slices of the model are flat tori scaled by f; the spectrum scales by 1/f².
    let model = WarpedMetricSpec::model(4)?;
    let slice = GraphSurface::slice(PeriodicGrid::uniform(&model, 12)?, 0.0)?;
    let s = conformal_operator_spectrum(&model, &slice, 2)?;
    println!("model slice t = 0 (12³): λ₂ = {:.4}, 4/9 = {:.4}", s.eigenvalues[1], 4.0 / 9.0);

    let three = WarpedMetricSpec::flat(3)?;
    let slice = GraphSurface::slice(PeriodicGrid::uniform(&three, 8)?, 0.0)?;
    match conformal_operator_spectrum(&three, &slice, 2) {
        Err(e) => println!("n = 3 rejected: {e}"),
        Ok(_) => unreachable!("n = 3 has no conformal operator"),
    }
    Ok(())
}
