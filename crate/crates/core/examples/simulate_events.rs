//! Event-level simulation of a multiplexed detector against the analytic
//! click probabilities.

use qng::source::{model_clicks, simulate_counts, ExperimentModel, HeraldedSourceModel};

fn main() -> qng::Result<()> {
    let source = HeraldedSourceModel::new(0.9, 0.02, None)?;
    for w in source.warnings() {
        eprintln!("warning: {w}");
    }
    for n in 1..=3 {
        let model = ExperimentModel::certification(source, n, 0.6, 1_000_000)?;
        let exact = model_clicks(&model)?;
        let rec = simulate_counts(&model, 11)?;
        let trials = rec.trials as f64;
        let z = |k: u64, p: f64| (k as f64 - p * trials) / (p * (1.0 - p) * trials).sqrt();
        println!(
            "n = {n}: r_n {:.5} vs {:.5} (z {:+.2}), r_n1 {:.3e} vs {:.3e} (z {:+.2})",
            rec.count_n as f64 / trials,
            exact.r_n,
            z(rec.count_n, exact.r_n),
            rec.count_n1 as f64 / trials,
            exact.r_n1,
            z(rec.count_n1, exact.r_n1)
        );
        if let Some(s) = &rec.subsets {
            println!("       n-fold counts per channel subset: {s:?}");
        }
    }
    Ok(())
}
