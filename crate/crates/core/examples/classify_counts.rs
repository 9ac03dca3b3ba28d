//! Classifying measured coincidence counts, with credible intervals and
//! the loss each record withstands.

use qng::numeric::logspace;
use qng::threshold::threshold_exact;
use qng::witness::{bayes_interval, classify, CountRecord};

fn main() -> qng::Result<()> {
    let curve = threshold_exact(2, &logspace(1e-12, 0.3, 40))?;

    let k = 47;
    let trials = 1_000_000;
    let iv = bayes_interval(k, trials)?;
    println!(
        "{k} events in {trials} trials: {:.3e} [{:.3e}, {:.3e}]",
        iv.point, iv.lo, iv.hi
    );

    let records = [
        ("strong", CountRecord::new(2, 10_000_000, 60_000, 40)?),
        ("marginal", CountRecord::new(2, 100_000, 300, 2)?),
        ("thermal-like", CountRecord::new(2, 1_000_000, 2_000, 500)?),
        ("silent", CountRecord::new(2, 1_000_000, 0, 0)?),
    ];
    for (name, rec) in &records {
        let v = classify(rec, &curve)?;
        let show = |x: Option<f64>| x.map_or("-".to_string(), |x| format!("{x:+.3}"));
        println!(
            "{name:>12}: {:<12} d_n {:>7} d_n1 {:>7} depth {}",
            v.state.to_string(),
            show(v.d_n),
            show(v.d_n1),
            v.depth.map_or("-".to_string(), |d| match d.db() {
                Some(_) => format!("{d} dB"),
                None => d.to_string(),
            })
        );
    }
    Ok(())
}
