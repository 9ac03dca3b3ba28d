//! Merged heralded single photons followed along an attenuation path in
//! 0.5 dB steps, and the depth at which they stop beating the threshold.

use qng::numeric::logspace;
use qng::source::{merged_state, ExperimentModel, HeraldedSourceModel};
use qng::threshold::threshold_exact;
use qng::witness::{attenuation_path, qng_depth};

fn main() -> qng::Result<()> {
    let n = 2;
    let source = HeraldedSourceModel::new(0.99, 0.002, None)?;
    let model = ExperimentModel::certification(source, n, 0.5, 1)?;
    let dist = merged_state(&model)?;
    let curve = threshold_exact(n, &logspace(1e-16, 0.3, 60))?;

    let path = attenuation_path(&dist, n, n + 1, 0.5, 25.0)?;
    for p in path.iter().step_by(5) {
        let above = p.r_n > curve.boundary(p.r_n1)?;
        println!(
            "{:>5.1} dB  eta {:.4}  r_n {:.4e}  r_n1 {:.4e}  {}",
            p.db,
            p.eta,
            p.r_n,
            p.r_n1,
            if above { "above" } else { "below" }
        );
    }
    println!("depth: {} dB", qng_depth(&dist, n, n + 1, &curve)?);

    // an ideal two-photon state never produces three-fold clicks
    let fock = qng::PhotonDistribution::fock(2);
    println!("|2>: {}", qng_depth(&fock, n, n + 1, &curve)?);
    Ok(())
}
