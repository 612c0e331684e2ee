//! Finite-difference curvature from raw metric samples against the closed
//! form, with Richardson extrapolation and the observed convergence order.

use warpmin::oracle::{curvature_fd, curvature_fd_richardson, metric_at, AmbientPoint};
use warpmin::warp::{curvature_profile, WarpedMetricSpec};

fn main() -> warpmin::Result<()> {
    let spec = WarpedMetricSpec::model(3)?;
    let h = 1e-2;
    let (mut coarse, mut fine, mut rich) = (0.0f64, 0.0f64, 0.0f64);
    for j in 0..16 {
        let t = 0.1 + std::f64::consts::TAU * j as f64 / 16.0;
        let p = AmbientPoint::new(&spec, t, vec![0.3, 0.6])?;
        let metric = metric_at(&spec, &p);
        let exact = curvature_profile(&spec, t)?;
        let err = |o: &warpmin::oracle::OracleCurvature| {
            (o.scalar - exact.scalar)
                .abs()
                .max((o.ricci_unit(&metric, 0) - exact.ric_tt).abs())
                .max((o.ricci_unit(&metric, 1) - exact.fiber_eigenvalue()).abs())
        };
        coarse = coarse.max(err(&curvature_fd(&spec, &p, h)?));
        fine = fine.max(err(&curvature_fd(&spec, &p, h / 2.0)?));
        rich = rich.max(err(&curvature_fd_richardson(&spec, &p, h)?));
    }
    println!("max error at h = {h}: {coarse:.3e}");
    println!("max error at h/2:     {fine:.3e}");
    println!("observed order:       {:.3}", (coarse / fine).log2());
    println!("Richardson error:     {rich:.3e}");
    Ok(())
}
