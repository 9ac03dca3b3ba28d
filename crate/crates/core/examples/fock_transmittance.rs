//! Smallest transmittance at which attenuated Fock states still pass the
//! first-order criterion on a two-channel detector.

use qng::witness::fock_single_criterion_transmittance;

fn main() -> qng::Result<()> {
    for m in 2..=6 {
        let eta = fock_single_criterion_transmittance(m)?;
        println!("|{m}>: eta > {eta:.3} ({:.2} dB)", -10.0 * eta.log10());
    }
    Ok(())
}
