//! Closed-form curvature of `dt² + f² g_T` for `f = 2 + cos t` and the two
//! identities tying `1/f` to the Ricci and scalar curvature.

use warpmin::warp::{
    curvature_profile, identity_residual_ricci, identity_residual_scalar, spectral_condition_margin,
    RadialWeight, SpectralKind, WarpedMetricSpec,
};

fn main() -> warpmin::Result<()> {
    for n in 3..=7 {
        let spec = WarpedMetricSpec::model(n)?;
        let mut worst = (0.0f64, 0.0f64);
        for j in 0..256 {
            let t = std::f64::consts::TAU * j as f64 / 256.0;
            worst.0 = worst.0.max(identity_residual_ricci(&spec, t)?.abs());
            worst.1 = worst.1.max(identity_residual_scalar(&spec, t)?.abs());
        }
        println!("n = {n}: max ricci residual {:.2e}, max scalar residual {:.2e}", worst.0, worst.1);
    }

    let spec = WarpedMetricSpec::model(3)?;
    let u = RadialWeight::canonical();
    println!("\n   t      Ric(dt,dt)  fiber Ric   Sc         margin");
    for t in [0.0, 1.0, 2.0, 3.0] {
        let c = curvature_profile(&spec, t)?;
        let m = spectral_condition_margin(&spec, &u, t, SpectralKind::Ricci)?;
        println!(
            "{t:5.2}  {:+.6}  {:+.6}  {:+.6}  {:+.6}",
            c.ric_tt,
            c.fiber_eigenvalue(),
            c.scalar,
            m.margin
        );
    }
    Ok(())
}
