//! The state-by-criterion table for one to five merged heralded photons,
//! with the depth of each tile.

use qng::numeric::logspace;
use qng::source::{reproduce_experiment_suite, HeraldedSourceModel};
use qng::threshold::threshold_exact;

fn main() -> qng::Result<()> {
    let k = 5;
    let grid = logspace(1e-16, 0.3, 80);
    let curves = (1..=k)
        .map(|n| threshold_exact(n, &grid))
        .collect::<qng::Result<Vec<_>>>()?;
    let source = HeraldedSourceModel::new(0.99, 0.002, None)?;
    let table = reproduce_experiment_suite(&source, 0.5, 1..=k, 1_000_000_000, &curves)?;

    print!("{:>8}", "order");
    for s in 1..=k {
        print!("{:>22}", format!("{s} photon(s)"));
    }
    println!();
    for n in (1..=k).rev() {
        print!("{n:>8}");
        for s in 1..=k {
            let c = table.cell(s, n).expect("every tile is computed");
            let text = match (&c.verdict, c.model_depth) {
                (Some(v), Some(d)) => format!("{} {d}", v.state),
                (Some(v), None) => v.state.to_string(),
                (None, _) => "n/a".into(),
            };
            print!("{text:>22}");
        }
        println!();
    }
    Ok(())
}
