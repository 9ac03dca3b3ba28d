//! Random Gaussian states tested against the exact threshold, and random
//! perturbations of one boundary point.

use qng::montecarlo::{boundary_probe, verification_grid, verify_with_curve};
use qng::threshold::threshold_exact;

fn main() -> qng::Result<()> {
    let n = 1;
    let curve = threshold_exact(n, &verification_grid())?;
    for modes in 1..=2 {
        let r = verify_with_curve(&curve, modes, 50_000, 7)?;
        println!(
            "{modes} mode(s): {} violations in {} runs, closest log10 gap {:.2e}",
            r.violations,
            r.runs,
            r.min_signed_log_distance.unwrap_or(f64::NAN)
        );
        if let Some(s) = r.closest_points.first() {
            println!("  closest sample #{}: {:?}", s.index, s.modes);
        }
    }

    let center = &curve.samples()[100];
    for jitter in [1e-3, 1e-2] {
        let r = boundary_probe(n, center, jitter, 5_000, 3)?;
        println!(
            "jitter {jitter:e} around r_n1 = {:.2e}: {} violations, closest {:.2e}",
            center.r_n1,
            r.violations,
            r.min_signed_log_distance.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
