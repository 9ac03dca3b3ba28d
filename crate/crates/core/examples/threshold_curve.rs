//! Exact threshold curves compared with the low-rate closed form.
//!
//! Run with an order argument, e.g. `cargo run --release --example
//! threshold_curve -- 3`.

use qng::numeric::logspace;
use qng::threshold::{threshold_closed_form, threshold_exact, threshold_param_approx};

fn main() -> qng::Result<()> {
    let n: usize = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(2);
    let grid = logspace(1e-14, 0.3, 28);
    let curve = threshold_exact(n, &grid)?;

    println!(
        "order {n}: low-rate slope should approach {:.4}",
        (n + 2) as f64 / n as f64
    );
    println!(
        "{:>10} {:>12} {:>12} {:>8} {:>8} {:>8}",
        "r_n1", "r_n max", "closed form", "beta", "V", "slope"
    );
    for s in curve.samples().iter().step_by(3) {
        let approx = threshold_closed_form(n, s.r_n1)?;
        println!(
            "{:>10.3e} {:>12.5e} {:>12.5e} {:>8.4} {:>8.5} {:>8.4}",
            s.r_n1,
            s.r_n_max,
            approx,
            s.beta,
            s.v,
            curve.log_slope(s.r_n1)
        );
    }

    // the parametric form, swept along the squeezing of the optimal state
    println!("parametric points:");
    for t in [0.01, 0.1, 0.5, 1.0] {
        let (r_n, r_n1) = threshold_param_approx(n, t)?;
        let exact = curve.boundary(r_n1)?;
        println!("  t = {t:<4}: r_n1 = {r_n1:.3e}, r_n = {r_n:.4e}, exact {exact:.4e}");
    }
    Ok(())
}
