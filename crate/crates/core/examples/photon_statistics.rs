//! Photon statistics of a squeezed coherent mode, loss, and the click
//! probabilities they produce on a three-channel detector.

use qng::detector::{attenuate, click_probabilities, transfer_matrix_element};
use qng::gaussian::{gaussian_photodistribution_auto, mean_photons_coherent};
use qng::GaussianModeParams;

fn main() -> qng::Result<()> {
    let mode = GaussianModeParams::new(1.2, 0.6, 0.0)?;
    let dist = gaussian_photodistribution_auto(&mode, 1e-13)?;
    println!(
        "beta = {}, V = {}: mean {:.4} photons ({:.4} from the displacement)",
        mode.beta,
        mode.v,
        dist.mean(),
        mean_photons_coherent(mode.beta)
    );
    for (m, p) in dist.probs().iter().enumerate().take(6) {
        println!("  P({m}) = {p:.6e}");
    }

    // all n + 1 = 3 channels fire only for m >= 3 photons
    println!("transfer matrix T_(3,m) for 3 channels:");
    for m in 0..=6 {
        println!("  m = {m}: {:.6}", transfer_matrix_element(3, m, 3)?);
    }

    for eta in [1.0, 0.5, 0.1] {
        let pair = click_probabilities(&attenuate(&dist, eta)?, 2, 3)?;
        println!(
            "eta = {eta:>4}: r_2 = {:.4e}, r_3 = {:.4e}",
            pair.r_n, pair.r_n1
        );
    }
    Ok(())
}
