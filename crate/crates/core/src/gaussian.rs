//! Closed-form statistics of pure Gaussian (squeezed coherent) modes.
//!
//! A mode is described by its displacement magnitude `beta`, its minimal
//! quadrature variance `v` (vacuum = 1) and the angle `phi` between the
//! squeezing axis and the displacement. In these units a coherent state
//! (`v = 1`) carries `beta^2 / 4` photons on average; see
//! [`mean_photons_coherent`].

use serde::{Deserialize, Serialize};

use crate::error::{QngError, Result};
use crate::hermite::{HermiteIter, LogSigned};
use crate::numeric::{ln_factorial, CompensatedSum};

/// Variances above this are evaluated through the Poisson limit; the squeezed
/// coherent photon-number formula is singular at `v = 1`.
pub const COHERENT_LIMIT_V: f64 = 1.0 - 1e-6;

/// Default bound on the probability mass beyond the truncation.
pub const DEFAULT_TAIL_TOL: f64 = 1e-13;

/// Largest truncation chosen automatically.
pub const MAX_TRUNCATION: usize = 256;

/// Tail bound above which an explicitly truncated distribution is rejected.
pub const EXPLICIT_TAIL_TOL: f64 = 1e-10;

/// Mean photon number of a coherent state (`v = 1`) with displacement `beta`.
///
/// Fixed by requiring the `v -> 1` limit of the squeezed coherent photon
/// statistics to be Poissonian; the vacuum probability `exp(-beta^2 tau / 4)`
/// of the attenuated coherent state agrees.
pub fn mean_photons_coherent(beta: f64) -> f64 {
    0.25 * beta * beta
}

/// Parameters of a single pure Gaussian mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianModeParams {
    pub beta: f64,
    pub v: f64,
    pub phi: f64,
}

impl GaussianModeParams {
    pub fn new(beta: f64, v: f64, phi: f64) -> Result<Self> {
        let p = GaussianModeParams { beta, v, phi };
        p.validate()?;
        Ok(p)
    }

    pub fn vacuum() -> Self {
        GaussianModeParams {
            beta: 0.0,
            v: 1.0,
            phi: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(QngError::domain(format!(
                "beta must be finite and >= 0, got {}",
                self.beta
            )));
        }
        if !(self.v > 0.0 && self.v <= 1.0) {
            return Err(QngError::domain(format!(
                "V must lie in (0, 1], got {}",
                self.v
            )));
        }
        if !self.phi.is_finite() {
            return Err(QngError::domain("phi must be finite"));
        }
        Ok(())
    }

    pub fn is_vacuum(&self) -> bool {
        self.beta == 0.0 && self.v == 1.0
    }
}

/// Independent Gaussian modes measured together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultimodeGaussianState {
    pub modes: Vec<GaussianModeParams>,
}

impl MultimodeGaussianState {
    pub fn new(modes: Vec<GaussianModeParams>) -> Result<Self> {
        if modes.is_empty() {
            return Err(QngError::domain(
                "a multimode state needs at least one mode",
            ));
        }
        for m in &modes {
            m.validate()?;
        }
        Ok(MultimodeGaussianState { modes })
    }

    pub fn single(mode: GaussianModeParams) -> Self {
        MultimodeGaussianState { modes: vec![mode] }
    }
}

/// Truncated photon-number distribution with an upper bound on the mass
/// beyond the truncation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhotonDistribution {
    probs: Vec<f64>,
    tail_bound: f64,
}

impl PhotonDistribution {
    /// Validates non-negativity and normalisation (within 1e-9).
    pub fn new(probs: Vec<f64>, tail_bound: f64) -> Result<Self> {
        if probs.is_empty() {
            return Err(QngError::domain("photon distribution needs at least P_0"));
        }
        if let Some((m, p)) = probs
            .iter()
            .enumerate()
            .find(|(_, p)| !(**p >= 0.0 && p.is_finite()))
        {
            return Err(QngError::domain(format!(
                "P_{m} = {p} is not a probability"
            )));
        }
        if !(tail_bound >= 0.0) {
            return Err(QngError::domain("tail bound must be non-negative"));
        }
        let total = probs.iter().copied().collect::<CompensatedSum>().value() + tail_bound;
        if (total - 1.0).abs() > 1e-9 {
            return Err(QngError::domain(format!(
                "probabilities plus tail sum to {total}, expected 1"
            )));
        }
        Ok(PhotonDistribution { probs, tail_bound })
    }

    pub(crate) fn from_parts_unchecked(probs: Vec<f64>, tail_bound: f64) -> Self {
        PhotonDistribution { probs, tail_bound }
    }

    pub fn vacuum() -> Self {
        PhotonDistribution {
            probs: vec![1.0],
            tail_bound: 0.0,
        }
    }

    /// The Fock state |n>.
    pub fn fock(n: usize) -> Self {
        let mut probs = vec![0.0; n + 1];
        probs[n] = 1.0;
        PhotonDistribution {
            probs,
            tail_bound: 0.0,
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn get(&self, m: usize) -> f64 {
        self.probs.get(m).copied().unwrap_or(0.0)
    }

    pub fn tail_bound(&self) -> f64 {
        self.tail_bound
    }

    /// Truncation K (index of the last stored probability).
    pub fn truncation(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn mean(&self) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(m, p)| m as f64 * p)
            .collect::<CompensatedSum>()
            .value()
    }

    pub fn total(&self) -> f64 {
        self.probs
            .iter()
            .copied()
            .collect::<CompensatedSum>()
            .value()
    }

    /// Highest photon number with non-zero probability, if any.
    pub fn max_photons(&self) -> Option<usize> {
        self.probs.iter().rposition(|&p| p > 0.0)
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(QngError::domain(format!(
            "transmittance must lie in [0, 1], got {tau}"
        )));
    }
    Ok(())
}

/// Probability of detecting vacuum after a beam splitter of transmittance
/// `tau`, for a pure Gaussian mode.
pub fn vacuum_probability(state: &GaussianModeParams, tau: f64) -> Result<f64> {
    state.validate()?;
    check_tau(tau)?;
    Ok(vacuum_probability_unchecked(
        state.beta, state.v, state.phi, tau,
    ))
}

#[inline]
pub(crate) fn vacuum_probability_unchecked(beta: f64, v: f64, phi: f64, tau: f64) -> f64 {
    let mu_v = 2.0 * v + tau * (1.0 - v);
    let inv = 1.0 / v;
    let mu_inv = 2.0 * inv + tau * (1.0 - inv);
    let (s, c) = phi.sin_cos();
    let exponent = -0.5 * beta * beta * tau * (c * c / mu_inv + s * s / mu_v);
    2.0 * exponent.exp() / (mu_v * mu_inv).sqrt()
}

/// Product of the per-mode vacuum probabilities.
pub fn vacuum_probability_multimode(state: &MultimodeGaussianState, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    let mut p = 1.0;
    for m in &state.modes {
        m.validate()?;
        p *= vacuum_probability_unchecked(m.beta, m.v, m.phi, tau);
    }
    Ok(p)
}

fn phi_is_aligned(phi: f64) -> bool {
    // P_n depends on beta only through H_n^2, so phi = pi is the same state
    phi.sin().abs() < 1e-12
}

/// Photon-number distribution of a squeezed coherent state with the squeezing
/// axis along the displacement (`phi = 0`), truncated at `k`.
pub fn gaussian_photodistribution(
    state: &GaussianModeParams,
    k: usize,
) -> Result<PhotonDistribution> {
    state.validate()?;
    if !phi_is_aligned(state.phi) {
        return Err(QngError::Unsupported(format!(
            "photon statistics are implemented for phi = 0 only, got {}",
            state.phi
        )));
    }
    let dist = if state.v > COHERENT_LIMIT_V {
        poisson_truncated(mean_photons_coherent(state.beta), k)
    } else {
        let probs = squeezed_coherent_probs(state.beta, state.v, k);
        let tail = tail_estimate(&probs);
        PhotonDistribution::from_parts_unchecked(probs, tail)
    };
    if dist.tail_bound > EXPLICIT_TAIL_TOL {
        return Err(QngError::Precision(format!(
            "truncation K = {k} leaves tail mass {:e} > {EXPLICIT_TAIL_TOL:e}",
            dist.tail_bound
        )));
    }
    Ok(dist)
}

/// As [`gaussian_photodistribution`] with the smallest truncation whose tail
/// estimate is below `tol`, capped at [`MAX_TRUNCATION`].
pub fn gaussian_photodistribution_auto(
    state: &GaussianModeParams,
    tol: f64,
) -> Result<PhotonDistribution> {
    state.validate()?;
    if !phi_is_aligned(state.phi) {
        return Err(QngError::Unsupported(format!(
            "photon statistics are implemented for phi = 0 only, got {}",
            state.phi
        )));
    }
    let dist = if state.v > COHERENT_LIMIT_V {
        coherent_limit_auto(mean_photons_coherent(state.beta), tol)
    } else {
        let mut series = SqueezedCoherentSeries::new(state.beta, state.v);
        let (probs, tail) = accumulate_until(tol, MAX_TRUNCATION, |_| {
            series.next().map_or(0.0, |t| t.prob)
        });
        PhotonDistribution::from_parts_unchecked(probs, tail)
    };
    if dist.tail_bound > tol {
        return Err(QngError::Precision(format!(
            "tail mass {:e} exceeds {tol:e} at the maximal truncation {MAX_TRUNCATION}",
            dist.tail_bound
        )));
    }
    Ok(dist)
}

/// Poisson distribution, the `v -> 1` limit of the squeezed coherent family.
pub fn coherent_limit_photodistribution(mean_photons: f64, k: usize) -> Result<PhotonDistribution> {
    if !(mean_photons >= 0.0 && mean_photons.is_finite()) {
        return Err(QngError::domain(format!(
            "mean photon number must be >= 0, got {mean_photons}"
        )));
    }
    Ok(poisson_truncated(mean_photons, k))
}

fn coherent_limit_auto(mean: f64, tol: f64) -> PhotonDistribution {
    let ln_mean = mean.ln();
    let (probs, tail) = accumulate_until(tol, MAX_TRUNCATION, |m| {
        if mean == 0.0 {
            if m == 0 {
                1.0
            } else {
                0.0
            }
        } else {
            (m as f64 * ln_mean - mean - ln_factorial(m)).exp()
        }
    });
    PhotonDistribution::from_parts_unchecked(probs, tail)
}

fn poisson_truncated(mean: f64, k: usize) -> PhotonDistribution {
    let probs: Vec<f64> = if mean == 0.0 {
        let mut p = vec![0.0; k + 1];
        p[0] = 1.0;
        p
    } else {
        let ln_mean = mean.ln();
        (0..=k)
            .map(|m| (m as f64 * ln_mean - mean - ln_factorial(m)).exp())
            .collect()
    };
    let tail = tail_estimate(&probs);
    PhotonDistribution::from_parts_unchecked(probs, tail)
}

/// Pulls probabilities from `term` until the estimated mass beyond the last
/// one drops below `tol` or `k_max` is reached.
fn accumulate_until<F: FnMut(usize) -> f64>(
    tol: f64,
    k_max: usize,
    mut term: F,
) -> (Vec<f64>, f64) {
    let mut probs = Vec::with_capacity(32);
    let mut acc = CompensatedSum::new();
    let mut tail = 1.0;
    for m in 0..=k_max {
        let p = term(m);
        probs.push(p);
        acc.add(p);
        tail = tail_from(&probs, acc.value());
        if m >= 1 && tail < tol {
            break;
        }
    }
    (probs, tail)
}

fn tail_estimate(probs: &[f64]) -> f64 {
    tail_from(
        probs,
        probs.iter().copied().collect::<CompensatedSum>().value(),
    )
}

/// Estimate of the mass beyond the last entry of `probs`. The normalisation
/// deficit is used while it is above rounding level; below that, a geometric
/// continuation of the last two pairs of terms (pairs, because squeezed
/// vacuum has exact zeros at odd photon numbers), capped by the rounding
/// level.
fn tail_from(probs: &[f64], total: f64) -> f64 {
    let k = probs.len();
    let deficit = 1.0 - total;
    let floor = 4.0 * k as f64 * f64::EPSILON;
    if deficit > floor {
        return deficit;
    }
    if k < 4 {
        return floor;
    }
    let last = probs[k - 1] + probs[k - 2];
    let before = probs[k - 3] + probs[k - 4];
    if last == 0.0 {
        // both terms underflowed
        return 0.0;
    }
    if before == 0.0 {
        return 2.0 * floor;
    }
    let ratio = last / before;
    if ratio < 0.95 {
        (last * ratio / (1.0 - ratio)).min(2.0 * floor)
    } else {
        2.0 * floor
    }
}

/// Streams the photon-number probabilities of a `phi = 0` squeezed coherent
/// state, P_m = A_m H_m(z)^2 with a positive prefactor A_m.
#[derive(Debug, Clone)]
pub(crate) struct SqueezedCoherentSeries {
    ln_base: f64,
    ln_q: f64,
    hermite: HermiteIter,
    m: usize,
    prev_h: LogSigned,
}

/// One term of [`SqueezedCoherentSeries`].
#[derive(Debug, Clone, Copy)]
pub(crate) struct SeriesTerm {
    pub prob: f64,
    pub ln_prefactor: f64,
    pub h: LogSigned,
    pub h_prev: LogSigned,
}

impl SqueezedCoherentSeries {
    pub fn new(beta: f64, v: f64) -> Self {
        Self::with_squeezing(beta, 1.0 - v)
    }

    /// Same as [`new`](Self::new) with `t = 1 - v` given directly, which
    /// keeps full relative precision for weak squeezing.
    pub fn with_squeezing(beta: f64, t: f64) -> Self {
        let v = 1.0 - t;
        let one_minus_v = t;
        let one_plus_v = 2.0 - t;
        let z = beta * (v / (2.0 * one_minus_v * one_plus_v)).sqrt();
        SqueezedCoherentSeries {
            ln_base: std::f64::consts::LN_2 + 0.5 * v.ln()
                - one_plus_v.ln()
                - beta * beta * v / (2.0 * one_plus_v),
            ln_q: (one_minus_v / (2.0 * one_plus_v)).ln(),
            hermite: HermiteIter::new(z),
            m: 0,
            prev_h: LogSigned::ZERO,
        }
    }
}

impl Iterator for SqueezedCoherentSeries {
    type Item = SeriesTerm;

    fn next(&mut self) -> Option<SeriesTerm> {
        let h = self.hermite.next()?;
        let m = self.m;
        let ln_prefactor = self.ln_base - ln_factorial(m) + m as f64 * self.ln_q;
        let prob = if h.sign == 0 {
            0.0
        } else {
            (ln_prefactor + 2.0 * h.ln_abs).exp()
        };
        let term = SeriesTerm {
            prob,
            ln_prefactor,
            h,
            h_prev: self.prev_h,
        };
        self.prev_h = h;
        self.m += 1;
        Some(term)
    }
}

fn squeezed_coherent_probs(beta: f64, v: f64, k: usize) -> Vec<f64> {
    SqueezedCoherentSeries::new(beta, v)
        .take(k + 1)
        .map(|t| t.prob)
        .collect()
}

/// Probabilities of a `phi = 0` mode with `t = 1 - v` in `(0, 1)`, truncated
/// once the neglected mass is below `tol`.
pub(crate) fn squeezed_probs_weak(beta: f64, t: f64, tol: f64) -> Vec<f64> {
    let mut series = SqueezedCoherentSeries::with_squeezing(beta, t);
    accumulate_until(tol, MAX_TRUNCATION, |_| {
        series.next().map_or(0.0, |t| t.prob)
    })
    .0
}

/// Photon-number probabilities and their partial derivatives with respect to
/// `beta` and `v` for a `phi = 0` mode with `v < 1`.
#[derive(Debug, Clone)]
pub(crate) struct PhotoGradient {
    pub probs: Vec<f64>,
    pub d_beta: Vec<f64>,
    pub d_v: Vec<f64>,
}

/// Parametrised by `t = 1 - v` to keep precision for weak squeezing;
/// derivatives are taken with respect to `v`. Truncation is chosen so that
/// the neglected mass is below `tol`.
pub(crate) fn photodistribution_gradient_weak(beta: f64, t: f64, tol: f64) -> PhotoGradient {
    debug_assert!(t > 0.0 && t < 1.0);
    let v = 1.0 - t;
    let one_plus_v = 2.0 - t;
    let one_minus_v = t;
    // d ln A_m / d beta and d ln A_m / d v
    let dlna_beta = -beta * v / one_plus_v;
    let dlna_v_base = 0.5 / v - 1.0 / one_plus_v - 0.5 * beta * beta / (one_plus_v * one_plus_v);
    let dlna_v_per_m = -1.0 / one_minus_v - 1.0 / one_plus_v;
    // z = beta * s(v), s^2 = v / (2 (1 - v^2))
    let one_minus_v2 = one_minus_v * one_plus_v;
    let s = (v / (2.0 * one_minus_v2)).sqrt();
    let ds = (1.0 + v * v) / (4.0 * s * one_minus_v2 * one_minus_v2);
    let dz_beta = s;
    let dz_v = beta * ds;

    let mut terms = Vec::with_capacity(32);
    let mut series = SqueezedCoherentSeries::with_squeezing(beta, t);
    let (probs, _) = accumulate_until(tol, MAX_TRUNCATION, |_| {
        let t = series.next().expect("series is unbounded");
        terms.push(t);
        t.prob
    });

    let mut d_beta = Vec::with_capacity(terms.len());
    let mut d_v = Vec::with_capacity(terms.len());
    for (m, t) in terms.iter().enumerate() {
        let dlna_v = dlna_v_base + m as f64 * dlna_v_per_m;
        // A_m * 2 H_m * dH_m/dz, with dH_m/dz = 2 m H_{m-1}
        let cross = if m == 0 || t.h.sign == 0 || t.h_prev.sign == 0 {
            0.0
        } else {
            let sign = (t.h.sign * t.h_prev.sign) as f64;
            sign * (t.ln_prefactor + t.h.ln_abs + t.h_prev.ln_abs + (4.0 * m as f64).ln()).exp()
        };
        d_beta.push(t.prob * dlna_beta + cross * dz_beta);
        d_v.push(t.prob * dlna_v + cross * dz_v);
    }
    PhotoGradient { probs, d_beta, d_v }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mode(beta: f64, v: f64, phi: f64) -> GaussianModeParams {
        GaussianModeParams::new(beta, v, phi).unwrap()
    }

    #[test]
    fn vacuum_is_invariant_under_loss() {
        let p = vacuum_probability(&GaussianModeParams::vacuum(), 0.7).unwrap();
        assert!((p - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_transmission_gives_vacuum() {
        let p = vacuum_probability(&mode(1.7, 0.3, 0.4), 0.0).unwrap();
        assert!((p - 1.0).abs() < 1e-15);
    }

    #[test]
    fn squeezed_vacuum_overlap_matches_sech_r() {
        // V = exp(-2r); |<0|S(r)|0>|^2 = 1 / cosh r
        let v = 0.5f64;
        let r = -0.5 * v.ln();
        let expected = 1.0 / r.cosh();
        let p = vacuum_probability(&mode(0.0, v, 0.0), 1.0).unwrap();
        assert!((p - expected).abs() < 1e-15);
        assert!((p - 2.0 / 4.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn domain_errors() {
        assert!(GaussianModeParams::new(0.0, 0.0, 0.0).is_err());
        assert!(GaussianModeParams::new(0.0, 1.2, 0.0).is_err());
        assert!(GaussianModeParams::new(-0.1, 0.5, 0.0).is_err());
        assert!(vacuum_probability(&mode(0.0, 0.5, 0.0), 1.1).is_err());
        assert!(vacuum_probability(&mode(0.0, 0.5, 0.0), -0.1).is_err());
    }

    #[test]
    fn multimode_products() {
        let vac = MultimodeGaussianState::new(vec![GaussianModeParams::vacuum(); 2]).unwrap();
        assert!((vacuum_probability_multimode(&vac, 0.5).unwrap() - 1.0).abs() < 1e-15);

        let a = mode(1.1, 0.4, 0.9);
        let st = MultimodeGaussianState::new(vec![a, GaussianModeParams::vacuum()]).unwrap();
        let single = vacuum_probability(&a, 0.3).unwrap();
        assert!((vacuum_probability_multimode(&st, 0.3).unwrap() - single).abs() < 1e-15);

        let sq = mode(0.0, 0.5, 0.0);
        let two = MultimodeGaussianState::new(vec![sq, sq]).unwrap();
        let p = vacuum_probability_multimode(&two, 1.0).unwrap();
        assert!((p - 8.0 / 9.0).abs() < 1e-15);
        assert!(MultimodeGaussianState::new(vec![]).is_err());
    }

    #[test]
    fn photodistribution_vacuum_and_parity() {
        let vac = gaussian_photodistribution(&GaussianModeParams::vacuum(), 10).unwrap();
        assert_eq!(vac.get(0), 1.0);
        assert!(vac.probs()[1..].iter().all(|&p| p == 0.0));

        let sv = gaussian_photodistribution(&mode(0.0, 0.5, 0.0), 60).unwrap();
        for m in (1..=59).step_by(2) {
            assert_eq!(sv.get(m), 0.0, "odd P_{m}");
        }
        assert!((sv.get(0) - 2.0 / 4.5f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn photodistribution_rejects_misaligned_phase() {
        let err = gaussian_photodistribution(&mode(1.0, 0.5, 0.3), 20).unwrap_err();
        assert!(matches!(err, QngError::Unsupported(_)));
        // phi = pi flips the sign of the displacement only
        let a = gaussian_photodistribution(&mode(1.0, 0.5, 0.0), 40).unwrap();
        let b = gaussian_photodistribution(&mode(1.0, 0.5, std::f64::consts::PI), 40).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn insufficient_truncation_is_a_precision_error() {
        let err = gaussian_photodistribution(&mode(3.0, 0.3, 0.0), 3).unwrap_err();
        assert!(matches!(err, QngError::Precision(_)));
    }

    #[test]
    fn poisson_limit() {
        let d = coherent_limit_photodistribution(1.0, 30).unwrap();
        assert!((d.get(0) - (-1f64).exp()).abs() < 1e-15);
        let vac = coherent_limit_photodistribution(0.0, 5).unwrap();
        assert_eq!(vac.get(0), 1.0);
        assert!(coherent_limit_photodistribution(-1.0, 5).is_err());
    }

    #[test]
    fn near_unit_variance_routes_to_poisson() {
        let d = gaussian_photodistribution(&mode(2.0, 1.0 - 1e-8, 0.0), 40).unwrap();
        let p = coherent_limit_photodistribution(1.0, 40).unwrap();
        assert_eq!(d, p);
    }

    #[test]
    fn auto_truncation_meets_tolerance() {
        for &(b, v) in &[(0.0, 0.2), (2.0, 0.5), (4.0, 0.9), (1.0, 1.0)] {
            let d = gaussian_photodistribution_auto(&mode(b, v, 0.0), DEFAULT_TAIL_TOL).unwrap();
            assert!(d.tail_bound() < DEFAULT_TAIL_TOL);
            assert!((d.total() + d.tail_bound() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        for &(b, v) in &[(0.3, 0.6), (1.2, 0.9), (2.5, 0.35), (0.05, 0.999)] {
            let g = photodistribution_gradient_weak(b, 1.0 - v, 1e-30);
            let h_b = 1e-6 * b.max(1e-3);
            let h_v = 1e-6 * v.min(1.0 - v);
            let pb = photodistribution_gradient_weak(b + h_b, 1.0 - v, 1e-30).probs;
            let mb = photodistribution_gradient_weak(b - h_b, 1.0 - v, 1e-30).probs;
            let pv = photodistribution_gradient_weak(b, 1.0 - v - h_v, 1e-30).probs;
            let mv = photodistribution_gradient_weak(b, 1.0 - v + h_v, 1e-30).probs;
            for m in 0..g
                .probs
                .len()
                .min(pb.len())
                .min(mb.len())
                .min(pv.len())
                .min(mv.len())
            {
                let fd_b = (pb[m] - mb[m]) / (2.0 * h_b);
                let fd_v = (pv[m] - mv[m]) / (2.0 * h_v);
                let sb = g.d_beta[m].abs().max(1e-12 * g.probs[0]);
                let sv = g.d_v[m].abs().max(1e-12 * g.probs[0]);
                assert!(
                    (fd_b - g.d_beta[m]).abs() <= 1e-5 * sb + 8.0 * f64::EPSILON / h_b,
                    "b={b} v={v} m={m}: {fd_b:e} vs {:e}",
                    g.d_beta[m]
                );
                assert!(
                    (fd_v - g.d_v[m]).abs() <= 1e-5 * sv + 8.0 * f64::EPSILON / h_v,
                    "b={b} v={v} m={m}: {fd_v:e} vs {:e}",
                    g.d_v[m]
                );
            }
        }
    }
}
