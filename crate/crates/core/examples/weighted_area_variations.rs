//! Weighted area of slices and graphs, its first variation against a
//! difference quotient, and the two forms of the second variation.

use warpmin::surface::{
    first_variation, normal_deformation, second_variation, weighted_area, GraphSurface, PeriodicGrid,
    VariationField,
};
use warpmin::warp::{RadialWeight, WarpedMetricSpec};

fn main() -> warpmin::Result<()> {
    let spec = WarpedMetricSpec::model(3)?;
    let u = RadialWeight::canonical();
    let grid = PeriodicGrid::uniform(&spec, 64)?;

    // Every slice has weighted area equal to the fiber volume.
    for t0 in [0.0, 1.0, 2.5] {
        let slice = GraphSurface::slice(grid.clone(), t0)?;
        println!("E(slice t = {t0}) - 4π² = {:+.2e}", weighted_area(&slice, &spec, &u)? - spec.fiber().volume());
    }

    let surface = GraphSurface::from_fn(grid.clone(), |x| 0.3 + 0.05 * x[0].cos() * x[1].sin())?;
    let field = VariationField::from_fn(&surface, &spec, &u, |x| 1.0 + 0.5 * x[1].cos())?;
    let eps = 1e-5;
    let plus = weighted_area(&normal_deformation(&surface, &spec, &u, &field.phi, eps)?, &spec, &u)?;
    let minus = weighted_area(&normal_deformation(&surface, &spec, &u, &field.phi, -eps)?, &spec, &u)?;
    let quotient = (plus - minus) / (2.0 * eps);
    let exact = first_variation(&surface, &spec, &u, &field)?;
    println!("\nfirst variation {exact:+.10e}, difference quotient {quotient:+.10e}");

    let slice = GraphSurface::slice(grid, 0.0)?;
    for (name, phi) in [("constant", 1.0), ("scaled constant", -2.5)] {
        let f = VariationField::constant(&slice, &spec, &u, phi)?;
        let q = second_variation(&slice, &spec, &u, &f)?;
        println!("second variation on the slice, {name}: raw {:+.2e}, rewritten {:+.2e}", q.raw, q.rewritten);
    }
    Ok(())
}
