//! Click statistics of a balanced N-channel binary detector.

use serde::{Deserialize, Serialize};

use crate::error::{QngError, Result};
use crate::gaussian::{
    gaussian_photodistribution_auto, vacuum_probability_unchecked, MultimodeGaussianState,
    PhotonDistribution,
};
use crate::numeric::{binomial, ln_binomial, CompensatedSum};

/// Largest tail mass `click_probabilities` accepts.
pub const CLICK_TAIL_TOL: f64 = 1e-12;

/// Below this the inclusion–exclusion route is replaced by the photon-number
/// route when the state allows it.
pub const CANCELLATION_FLOOR: f64 = 1e-13;

/// A balanced multichannel detector with uniform channel efficiency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub channels: usize,
    pub efficiency: f64,
}

impl DetectorConfig {
    pub fn new(channels: usize, efficiency: f64) -> Result<Self> {
        if channels == 0 {
            return Err(QngError::domain("a detector needs at least one channel"));
        }
        if !(0.0..=1.0).contains(&efficiency) {
            return Err(QngError::domain(format!(
                "efficiency must lie in [0, 1], got {efficiency}"
            )));
        }
        Ok(DetectorConfig {
            channels,
            efficiency,
        })
    }

    /// The certification setup for criterion order `n`: n + 1 channels.
    pub fn for_order(n: usize, efficiency: f64) -> Result<Self> {
        Self::new(n + 1, efficiency)
    }
}

/// Success and error probabilities of the order-n criterion: all n designated
/// channels click (`r_n`), all n + 1 channels click (`r_n1`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClickPair {
    pub order: usize,
    pub r_n: f64,
    pub r_n1: f64,
}

impl ClickPair {
    pub fn new(order: usize, r_n: f64, r_n1: f64) -> Result<Self> {
        if order == 0 {
            return Err(QngError::domain("criterion order must be >= 1"));
        }
        if !(0.0..=1.0).contains(&r_n) || !(0.0..=1.0).contains(&r_n1) {
            return Err(QngError::domain(format!(
                "rates must lie in [0, 1]: ({r_n}, {r_n1})"
            )));
        }
        Ok(ClickPair { order, r_n, r_n1 })
    }
}

fn check_orders(n: usize, channels: usize) -> Result<()> {
    if channels == 0 {
        return Err(QngError::domain("a detector needs at least one channel"));
    }
    if n > channels {
        return Err(QngError::domain(format!(
            "cannot request {n} clicks on {channels} channels"
        )));
    }
    Ok(())
}

/// Probability that `m` photons spread uniformly over `channels` outputs make
/// all of `n` designated channels click.
pub fn transfer_matrix_element(n: usize, m: usize, channels: usize) -> Result<f64> {
    check_orders(n, channels)?;
    Ok(transfer_unchecked(n, m, channels))
}

fn transfer_unchecked(n: usize, m: usize, channels: usize) -> f64 {
    if n > m {
        return 0.0;
    }
    let big_n = channels as f64;
    let mut s = CompensatedSum::new();
    s.add(1.0);
    for k in 1..=n {
        let sign = if k % 2 == 1 { -1.0 } else { 1.0 };
        s.add(sign * binomial(n, k) * (1.0 - k as f64 / big_n).powi(m as i32));
    }
    s.value().clamp(0.0, 1.0)
}

/// The summed-up forms of the transfer matrix for `m` in `{n, n + 1, n + 2}`.
pub fn transfer_matrix_closed_form(n: usize, m: usize, channels: usize) -> Result<f64> {
    check_orders(n, channels)?;
    let nf = n as f64;
    let big_n = channels as f64;
    let fact = |k: usize| (1..=k).map(|i| i as f64).product::<f64>();
    if m == n {
        Ok(fact(n) / big_n.powi(n as i32))
    } else if m == n + 1 {
        Ok(fact(n + 1) / big_n.powi(n as i32) * (1.0 - nf / (2.0 * big_n)))
    } else if m == n + 2 {
        Ok(fact(n + 2) / big_n.powi(n as i32 + 2) / 24.0
            * (nf + 3.0 * nf * nf - 12.0 * nf * big_n + 12.0 * big_n * big_n))
    } else {
        Err(QngError::Unsupported(format!(
            "closed forms exist for m in {{n, n+1, n+2}} only, got n = {n}, m = {m}"
        )))
    }
}

/// Rows of the transfer matrix for orders n and n + 1, cached up to a
/// truncation.
#[derive(Debug, Clone)]
pub struct TransferRows {
    pub order: usize,
    pub channels: usize,
    pub success: Vec<f64>,
    pub error: Vec<f64>,
}

impl TransferRows {
    pub fn new(n: usize, channels: usize, k_max: usize) -> Result<Self> {
        if channels < n + 1 {
            return Err(QngError::domain(format!(
                "order {n} needs at least {} channels, got {channels}",
                n + 1
            )));
        }
        let success = (0..=k_max)
            .map(|m| transfer_unchecked(n, m, channels))
            .collect();
        let error = (0..=k_max)
            .map(|m| transfer_unchecked(n + 1, m, channels))
            .collect();
        Ok(TransferRows {
            order: n,
            channels,
            success,
            error,
        })
    }

    pub fn len(&self) -> usize {
        self.success.len()
    }

    pub fn is_empty(&self) -> bool {
        self.success.is_empty()
    }

    pub(crate) fn apply(&self, probs: &[f64]) -> (f64, f64) {
        debug_assert!(probs.len() <= self.len());
        let mut rn = CompensatedSum::new();
        let mut rn1 = CompensatedSum::new();
        for (m, p) in probs.iter().enumerate() {
            rn.add(self.success[m] * p);
            rn1.add(self.error[m] * p);
        }
        (rn.value(), rn1.value())
    }
}

/// Click probabilities of a phase-insensitive state given its photon-number
/// distribution.
pub fn click_probabilities(
    dist: &PhotonDistribution,
    n: usize,
    channels: usize,
) -> Result<ClickPair> {
    if n == 0 {
        return Err(QngError::domain("criterion order must be >= 1"));
    }
    if channels < n + 1 {
        return Err(QngError::domain(format!(
            "order {n} needs at least {} channels, got {channels}",
            n + 1
        )));
    }
    if dist.tail_bound() >= CLICK_TAIL_TOL {
        return Err(QngError::Precision(format!(
            "distribution tail {:e} is too large for click probabilities (< {CLICK_TAIL_TOL:e})",
            dist.tail_bound()
        )));
    }
    let rows = TransferRows::new(n, channels, dist.truncation())?;
    let (r_n, r_n1) = rows.apply(dist.probs());
    let r_n = r_n.clamp(0.0, 1.0);
    let r_n1 = r_n1.clamp(0.0, r_n);
    Ok(ClickPair {
        order: n,
        r_n,
        r_n1,
    })
}

/// Click probabilities from the vacuum probabilities at transmittances
/// `k / channels` together with an absolute rounding-error bound for each.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InclusionExclusion {
    pub r_n: f64,
    pub r_n1: f64,
    pub err_n: f64,
    pub err_n1: f64,
}

/// Evaluates the inclusion–exclusion sums for a product of Gaussian modes.
/// No validation; callers guarantee `channels >= n + 1` and valid modes.
pub(crate) fn inclusion_exclusion_raw(
    modes: &[crate::gaussian::GaussianModeParams],
    n: usize,
    channels: usize,
) -> InclusionExclusion {
    let big_n = channels as f64;
    // P0 at tau = k / N, k = 0..=n+1
    let mut p0 = [1.0f64; 64];
    debug_assert!(n + 2 <= p0.len());
    for (k, slot) in p0.iter_mut().enumerate().take(n + 2).skip(1) {
        let tau = k as f64 / big_n;
        *slot = modes
            .iter()
            .map(|m| vacuum_probability_unchecked(m.beta, m.v, m.phi, tau))
            .product();
    }
    let sum = |order: usize| {
        let mut s = CompensatedSum::new();
        s.add(1.0);
        for (k, p) in p0.iter().enumerate().take(order + 1).skip(1) {
            let sign = if k % 2 == 1 { -1.0 } else { 1.0 };
            s.add(sign * binomial(order, k) * p);
        }
        s
    };
    let sn = sum(n);
    let sn1 = sum(n + 1);
    // each P0 carries a few ulp of relative error from exp and sqrt
    let ulp = 8.0 * f64::EPSILON * (modes.len() as f64 + 1.0);
    InclusionExclusion {
        r_n: sn.value(),
        r_n1: sn1.value(),
        err_n: ulp * sn.magnitude(),
        err_n1: ulp * sn1.magnitude(),
    }
}

/// Click probabilities of a product of Gaussian modes by inclusion–exclusion
/// over vacuum probabilities. Single aligned modes with rates below
/// [`CANCELLATION_FLOOR`] are re-evaluated through their photon-number
/// distribution, which has no cancellation.
pub fn click_probabilities_gaussian(
    state: &MultimodeGaussianState,
    n: usize,
    channels: usize,
) -> Result<ClickPair> {
    if n == 0 {
        return Err(QngError::domain("criterion order must be >= 1"));
    }
    if channels < n + 1 {
        return Err(QngError::domain(format!(
            "order {n} needs at least {} channels, got {channels}",
            n + 1
        )));
    }
    if n + 2 > 64 {
        return Err(QngError::Unsupported(format!(
            "order {n} is beyond the supported range"
        )));
    }
    for m in &state.modes {
        m.validate()?;
    }
    let ie = inclusion_exclusion_raw(&state.modes, n, channels);
    if ie.r_n1 < CANCELLATION_FLOOR
        && state.modes.len() == 1
        && state.modes[0].phi.sin().abs() < 1e-12
    {
        if let Ok(dist) = gaussian_photodistribution_auto(&state.modes[0], 1e-15) {
            return click_probabilities_unchecked_tail(&dist, n, channels);
        }
    }
    let r_n = ie.r_n.clamp(0.0, 1.0);
    let r_n1 = ie.r_n1.clamp(0.0, r_n);
    Ok(ClickPair {
        order: n,
        r_n,
        r_n1,
    })
}

fn click_probabilities_unchecked_tail(
    dist: &PhotonDistribution,
    n: usize,
    channels: usize,
) -> Result<ClickPair> {
    let rows = TransferRows::new(n, channels, dist.truncation())?;
    let (r_n, r_n1) = rows.apply(dist.probs());
    let r_n = r_n.clamp(0.0, 1.0);
    Ok(ClickPair {
        order: n,
        r_n,
        r_n1: r_n1.clamp(0.0, r_n),
    })
}

/// Binomial loss with transmittance `eta`.
pub fn attenuate(dist: &PhotonDistribution, eta: f64) -> Result<PhotonDistribution> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(QngError::domain(format!(
            "transmittance must lie in [0, 1], got {eta}"
        )));
    }
    let probs = dist.probs();
    if eta == 1.0 {
        return Ok(dist.clone());
    }
    let k_max = dist.max_photons().unwrap_or(0);
    if eta == 0.0 {
        return Ok(PhotonDistribution::from_parts_unchecked(
            vec![dist.total()],
            dist.tail_bound(),
        ));
    }
    let (ln_eta, ln_loss) = (eta.ln(), (1.0 - eta).ln());
    let out: Vec<f64> = (0..=k_max)
        .map(|k| {
            let mut s = CompensatedSum::new();
            for (m, &p) in probs.iter().enumerate().skip(k) {
                if p > 0.0 {
                    let ln_w = ln_binomial(m, k) + k as f64 * ln_eta + (m - k) as f64 * ln_loss;
                    s.add(p * ln_w.exp());
                }
            }
            s.value()
        })
        .collect();
    Ok(PhotonDistribution::from_parts_unchecked(
        out,
        dist.tail_bound(),
    ))
}

/// Photon-number distribution of independent sources detected together.
pub fn merge(dists: &[PhotonDistribution]) -> PhotonDistribution {
    let mut acc = PhotonDistribution::vacuum();
    for d in dists {
        let a = acc.probs();
        let b = d.probs();
        let mut out = vec![CompensatedSum::new(); a.len() + b.len() - 1];
        for (i, &pa) in a.iter().enumerate() {
            if pa == 0.0 {
                continue;
            }
            for (j, &pb) in b.iter().enumerate() {
                out[i + j].add(pa * pb);
            }
        }
        acc = PhotonDistribution::from_parts_unchecked(
            out.iter().map(|s| s.value()).collect(),
            acc.tail_bound() + d.tail_bound(),
        );
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::GaussianModeParams;

    #[test]
    fn transfer_examples() {
        assert_eq!(transfer_matrix_element(2, 1, 5).unwrap(), 0.0);
        assert!((transfer_matrix_element(1, 1, 2).unwrap() - 0.5).abs() < 1e-15);
        assert!((transfer_matrix_element(2, 3, 3).unwrap() - 4.0 / 9.0).abs() < 1e-15);
        assert!(transfer_matrix_element(4, 5, 3).is_err());
    }

    #[test]
    fn closed_form_examples() {
        assert!((transfer_matrix_closed_form(2, 2, 3).unwrap() - 2.0 / 9.0).abs() < 1e-15);
        assert!((transfer_matrix_closed_form(1, 2, 2).unwrap() - 0.75).abs() < 1e-15);
        assert!((transfer_matrix_closed_form(1, 3, 4).unwrap() - 0.578125).abs() < 1e-15);
        assert!(matches!(
            transfer_matrix_closed_form(1, 4, 4),
            Err(QngError::Unsupported(_))
        ));
    }

    #[test]
    fn click_examples() {
        let vac = click_probabilities(&PhotonDistribution::vacuum(), 2, 3).unwrap();
        assert_eq!((vac.r_n, vac.r_n1), (0.0, 0.0));

        let att = PhotonDistribution::new(vec![0.4, 0.6], 0.0).unwrap();
        let c = click_probabilities(&att, 1, 2).unwrap();
        assert!((c.r_n - 0.3).abs() < 1e-15);
        assert_eq!(c.r_n1, 0.0);

        let f2 = click_probabilities(&PhotonDistribution::fock(2), 2, 3).unwrap();
        assert!((f2.r_n - 2.0 / 9.0).abs() < 1e-15);
        assert_eq!(f2.r_n1, 0.0);
    }

    #[test]
    fn click_requires_enough_channels_and_small_tail() {
        assert!(click_probabilities(&PhotonDistribution::fock(2), 2, 2).is_err());
        let loose = PhotonDistribution::new(vec![0.5, 0.5 - 1e-10], 1e-10).unwrap();
        assert!(matches!(
            click_probabilities(&loose, 1, 2),
            Err(QngError::Precision(_))
        ));
    }

    #[test]
    fn gaussian_route_examples() {
        let vac = MultimodeGaussianState::single(GaussianModeParams::vacuum());
        let c = click_probabilities_gaussian(&vac, 3, 4).unwrap();
        assert_eq!((c.r_n, c.r_n1), (0.0, 0.0));

        let sv = GaussianModeParams::new(0.0, 0.5, 0.0).unwrap();
        let st = MultimodeGaussianState::single(sv);
        let p0 = |tau: f64| crate::gaussian::vacuum_probability(&sv, tau).unwrap();
        let c1 = click_probabilities_gaussian(&st, 1, 2).unwrap();
        assert!((c1.r_n - (1.0 - p0(0.5))).abs() < 1e-15);
        let c2 = click_probabilities_gaussian(&st, 2, 3).unwrap();
        assert!((c2.r_n - (1.0 - 2.0 * p0(1.0 / 3.0) + p0(2.0 / 3.0))).abs() < 1e-15);

        // the photon-number route agrees
        let dist = crate::gaussian::gaussian_photodistribution_auto(&sv, 1e-15).unwrap();
        let d1 = click_probabilities(&dist, 1, 2).unwrap();
        assert!((d1.r_n - c1.r_n).abs() < 1e-12);
        assert!((d1.r_n1 - c1.r_n1).abs() < 1e-12);
    }

    #[test]
    fn attenuation_examples() {
        let f2 = PhotonDistribution::fock(2);
        assert_eq!(attenuate(&f2, 1.0).unwrap(), f2);
        let gone = attenuate(&f2, 0.0).unwrap();
        assert_eq!(gone.probs(), &[1.0]);
        let half = attenuate(&f2, 0.5).unwrap();
        for (a, b) in half.probs().iter().zip([0.25, 0.5, 0.25]) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(attenuate(&f2, 1.5).is_err());
    }

    #[test]
    fn merge_examples() {
        let p = PhotonDistribution::new(vec![0.2, 0.5, 0.3], 0.0).unwrap();
        let m = merge(&[p.clone(), PhotonDistribution::vacuum()]);
        assert_eq!(m.probs(), p.probs());

        let coin = PhotonDistribution::new(vec![0.5, 0.5], 0.0).unwrap();
        let two = merge(&[coin.clone(), coin.clone()]);
        assert_eq!(two.probs(), &[0.25, 0.5, 0.25]);
        let three = merge(&[coin.clone(), coin.clone(), coin]);
        assert_eq!(three.probs(), &[0.125, 0.375, 0.375, 0.125]);
    }
}
