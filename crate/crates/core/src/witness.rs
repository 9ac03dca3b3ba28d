//! From measured coincidence counts to non-Gaussianity verdicts.
//!
//! Rates are estimated with minimum-width 68 % credible intervals under a
//! uniform prior. A record is positive when the whole credible rectangle
//! lies above the threshold curve, negative when it lies entirely below, and
//! inconclusive otherwise. Loss robustness is reported in dB.

use serde::{Deserialize, Serialize};

use crate::detector::{attenuate, click_probabilities, ClickPair};
use crate::error::{QngError, Result};
use crate::gaussian::PhotonDistribution;
use crate::numeric::{beta_quantile, beta_reg};
use crate::threshold::{BoundarySolver, Regime, SolverConfig, ThresholdCurve};

/// Posterior mass of the reported intervals.
pub const CREDIBLE_MASS: f64 = 0.68;

/// Resolution of depth searches.
pub const DEPTH_RESOLUTION_DB: f64 = 0.01;

/// Depth searches give up beyond this attenuation; past it the click
/// probabilities of interesting orders underflow.
pub const MAX_DEPTH_DB: f64 = 400.0;

/// Smallest variance admitted when the Fock transmittances are computed.
/// The n = 1 boundary at large error rates is attained by strongly squeezed
/// states (V near 0.18 for |6>), well below the 1/(n+2) used for the
/// low-rate curves; the floor itself is never reached for m <= 6.
pub const FOCK_V_MIN: f64 = 0.01;

/// Coincidence counts of one measurement.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountRecord {
    pub order: usize,
    pub trials: u64,
    pub count_n: u64,
    pub count_n1: u64,
    /// n-fold counts for each of the n + 1 channel subsets; entry 0 is the
    /// designated subset and must equal `count_n`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subsets: Option<Vec<u64>>,
}

impl CountRecord {
    pub fn new(order: usize, trials: u64, count_n: u64, count_n1: u64) -> Result<Self> {
        let rec = CountRecord {
            order,
            trials,
            count_n,
            count_n1,
            subsets: None,
        };
        rec.validate()?;
        Ok(rec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.order == 0 {
            return Err(QngError::domain("criterion order must be >= 1"));
        }
        if self.trials == 0 {
            return Err(QngError::domain("a count record needs at least one trial"));
        }
        if !(self.count_n1 <= self.count_n && self.count_n <= self.trials) {
            return Err(QngError::Inconsistent(format!(
                "counts must satisfy count_n1 <= count_n <= trials, got {} / {} / {}",
                self.count_n1, self.count_n, self.trials
            )));
        }
        if let Some(subsets) = &self.subsets {
            if subsets.len() != self.order + 1 {
                return Err(QngError::Inconsistent(format!(
                    "order {} has {} channel subsets, record lists {}",
                    self.order,
                    self.order + 1,
                    subsets.len()
                )));
            }
            if subsets[0] != self.count_n {
                return Err(QngError::Inconsistent(format!(
                    "designated subset count {} differs from count_n {}",
                    subsets[0], self.count_n
                )));
            }
            if let Some(bad) = subsets
                .iter()
                .find(|&&c| c < self.count_n1 || c > self.trials)
            {
                return Err(QngError::Inconsistent(format!(
                    "subset count {bad} outside [count_n1, trials] = [{}, {}]",
                    self.count_n1, self.trials
                )));
            }
        }
        Ok(())
    }
}

/// Posterior mode with a minimum-width credible interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalEstimate {
    pub point: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Minimum-width interval of Beta(k + 1, trials - k + 1) holding
/// [`CREDIBLE_MASS`] of the posterior.
pub fn bayes_interval(k: u64, trials: u64) -> Result<IntervalEstimate> {
    if trials == 0 {
        return Err(QngError::domain("trials must be >= 1"));
    }
    if k > trials {
        return Err(QngError::domain(format!(
            "count {k} exceeds trials {trials}"
        )));
    }
    Ok(beta_interval(k as f64, trials as f64))
}

/// Same as [`bayes_interval`] for a possibly fractional count.
pub(crate) fn beta_interval(k: f64, trials: f64) -> IntervalEstimate {
    let (a, b) = (k + 1.0, trials - k + 1.0);
    let point = k / trials;
    if k == 0.0 {
        return IntervalEstimate {
            point,
            lo: 0.0,
            hi: beta_quantile(a, b, CREDIBLE_MASS),
        };
    }
    if k == trials {
        return IntervalEstimate {
            point,
            lo: beta_quantile(a, b, 1.0 - CREDIBLE_MASS),
            hi: 1.0,
        };
    }
    // the shortest interval has equal density at both ends; log density
    // without the normalisation
    let ln_pdf = |x: f64| {
        if x <= 0.0 || x >= 1.0 {
            f64::NEG_INFINITY
        } else {
            (a - 1.0) * x.ln() + (b - 1.0) * (-x).ln_1p()
        }
    };
    let upper = |lo: f64| beta_quantile(a, b, beta_reg(a, b, lo) + CREDIBLE_MASS);
    let (mut l, mut r) = (0.0, beta_quantile(a, b, 1.0 - CREDIBLE_MASS));
    for _ in 0..200 {
        let mid = 0.5 * (l + r);
        if mid <= l || mid >= r {
            break;
        }
        if ln_pdf(mid) < ln_pdf(upper(mid)) {
            l = mid;
        } else {
            r = mid;
        }
    }
    let lo = 0.5 * (l + r);
    IntervalEstimate {
        point,
        lo,
        hi: upper(lo),
    }
}

/// How `r_n` is estimated from a record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RateEstimator {
    /// Counts of the designated channel subset only.
    #[default]
    Designated,
    /// Mean over all n + 1 subsets; needs per-subset counts.
    SubsetAverage,
}

/// Estimated click rates with their credible intervals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub order: usize,
    pub r_n: IntervalEstimate,
    pub r_n1: IntervalEstimate,
    pub estimator: RateEstimator,
    /// Trials behind the `r_n` interval. Subset averages share trials, so
    /// the interval of the mean count is computed with the plain trial
    /// count, which ignores the variance reduction from averaging.
    pub effective_trials: f64,
}

impl RateEstimate {
    pub fn point(&self) -> ClickPair {
        ClickPair {
            order: self.order,
            r_n: self.r_n.point,
            r_n1: self.r_n1.point,
        }
    }
}

pub fn estimate_rates(rec: &CountRecord, estimator: RateEstimator) -> Result<RateEstimate> {
    rec.validate()?;
    let trials = rec.trials as f64;
    let r_n = match estimator {
        RateEstimator::Designated => beta_interval(rec.count_n as f64, trials),
        RateEstimator::SubsetAverage => {
            let subsets = rec.subsets.as_ref().ok_or_else(|| {
                QngError::Inconsistent("subset averaging needs per-subset counts".into())
            })?;
            let mean = subsets.iter().sum::<u64>() as f64 / subsets.len() as f64;
            beta_interval(mean, trials)
        }
    };
    let r_n1 = beta_interval(rec.count_n1 as f64, trials);
    Ok(RateEstimate {
        order: rec.order,
        r_n,
        r_n1,
        estimator,
        effective_trials: trials,
    })
}

/// Attenuation a state withstands while staying above the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Depth {
    /// Largest attenuation in dB that keeps the state non-Gaussian.
    Finite(f64),
    /// Non-Gaussian at every transmittance (no (n+1)-fold clicks at all).
    Unbounded,
    /// Already below the threshold without added loss.
    NotQngAtSource,
}

impl Depth {
    pub fn db(&self) -> Option<f64> {
        match self {
            Depth::Finite(d) => Some(*d),
            _ => None,
        }
    }

    fn rank(&self) -> (u8, f64) {
        match self {
            Depth::NotQngAtSource => (0, 0.0),
            Depth::Finite(d) => (1, *d),
            Depth::Unbounded => (2, 0.0),
        }
    }
}

impl PartialOrd for Depth {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        self.rank().partial_cmp(&other.rank())
    }
}

impl std::fmt::Display for Depth {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Depth::Finite(d) => write!(f, "{d:.2}"),
            Depth::Unbounded => f.write_str("unbounded"),
            Depth::NotQngAtSource => f.write_str("not-qng"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VerdictState {
    Positive,
    Inconclusive,
    Negative,
    NoData,
}

impl std::fmt::Display for VerdictState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            VerdictState::Positive => "positive",
            VerdictState::Inconclusive => "inconclusive",
            VerdictState::Negative => "negative",
            VerdictState::NoData => "no-data",
        })
    }
}

/// Classification of one record against a threshold curve.
///
/// `d_n` is the log10 gap along `r_n` between the point estimate and the
/// curve, `d_n1` the gap along `r_n1`; both are positive above the curve.
/// They are `None` when there is no data, when `r_n1` is estimated as zero
/// (the gaps are then infinite) or when the point lies above the range of
/// the curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub order: usize,
    pub state: VerdictState,
    pub estimate: RateEstimate,
    pub threshold: Option<f64>,
    pub regime: Option<Regime>,
    pub d_n: Option<f64>,
    pub d_n1: Option<f64>,
    pub depth: Option<Depth>,
    /// Depths of the worst and best corner of the credible rectangle.
    pub depth_bracket: Option<(Depth, Depth)>,
}

pub fn classify(rec: &CountRecord, curve: &ThresholdCurve) -> Result<Verdict> {
    classify_with(rec, curve, RateEstimator::Designated)
}

pub fn classify_with(
    rec: &CountRecord,
    curve: &ThresholdCurve,
    estimator: RateEstimator,
) -> Result<Verdict> {
    if rec.order != curve.order() {
        return Err(QngError::Inconsistent(format!(
            "record of order {} tested against a curve of order {}",
            rec.order,
            curve.order()
        )));
    }
    let estimate = estimate_rates(rec, estimator)?;
    let order = rec.order;
    if rec.count_n == 0 && rec.count_n1 == 0 {
        return Ok(Verdict {
            order,
            state: VerdictState::NoData,
            estimate,
            threshold: None,
            regime: None,
            d_n: None,
            d_n1: None,
            depth: None,
            depth_bracket: None,
        });
    }
    let (rn, rn1) = (estimate.r_n, estimate.r_n1);
    let worst_above = corner_above(curve, rn.lo, rn1.hi)?;
    let best_above = corner_above(curve, rn.hi, rn1.lo)?;
    let state = if worst_above {
        VerdictState::Positive
    } else if !best_above {
        VerdictState::Negative
    } else {
        VerdictState::Inconclusive
    };

    // above the sampled range only the r_n1 gap can be measured
    let q = match curve.threshold_at(rn1.point) {
        Ok(q) => Some(q),
        Err(QngError::OutOfRange { .. }) => None,
        Err(e) => return Err(e),
    };
    let (d_n, d_n1) = if rn1.point == 0.0 {
        (None, None)
    } else {
        let d_n = match q {
            Some(_) => Some(rn.point.log10() - curve.boundary(rn1.point)?.log10()),
            None => None,
        };
        let d_n1 = match curve.preimage(rn.point) {
            Ok(pre) => Some(pre.log10() - rn1.point.log10()),
            // r_n beyond the top of the curve: the gap along r_n1 is at
            // least the distance to the last sample
            Err(QngError::OutOfRange { max, .. }) if q.is_some() => {
                Some(max.log10() - rn1.point.log10())
            }
            Err(QngError::OutOfRange { .. }) => None,
            Err(e) => return Err(e),
        };
        (d_n, d_n1)
    };

    let depth = counts_depth(curve, rn.point, rn1.point)?;
    let depth_bracket = (
        counts_depth(curve, rn.lo, rn1.hi)?,
        counts_depth(curve, rn.hi, rn1.lo)?,
    );
    Ok(Verdict {
        order,
        state,
        estimate,
        threshold: q.map(|q| q.r_n),
        regime: q.map(|q| q.regime),
        d_n,
        d_n1,
        depth: Some(depth),
        depth_bracket: Some(depth_bracket),
    })
}

/// Whether `(r_n, r_n1)` lies strictly above the curve. Above the sampled
/// range the answer is only known when `r_n` does not exceed the top of the
/// curve.
fn corner_above(curve: &ThresholdCurve, r_n: f64, r_n1: f64) -> Result<bool> {
    match curve.threshold_at(r_n1) {
        Ok(q) => Ok(r_n > q.r_n),
        Err(QngError::OutOfRange { .. }) if r_n <= top_of(curve) => Ok(false),
        Err(e) => Err(e),
    }
}

fn top_of(curve: &ThresholdCurve) -> f64 {
    curve.samples().last().map_or(0.0, |s| s.r_n_max)
}

/// Depth of a measured point, assuming loss scales the rates as
/// `r_n ~ eta^n` and `r_n1 ~ eta^(n+1)`.
fn counts_depth(curve: &ThresholdCurve, r_n: f64, r_n1: f64) -> Result<Depth> {
    if r_n <= 0.0 {
        return Ok(Depth::NotQngAtSource);
    }
    if r_n1 == 0.0 {
        return Ok(Depth::Unbounded);
    }
    let n = curve.order() as i32;
    search_depth(|db| {
        let eta = db_to_eta(db);
        corner_above(curve, r_n * eta.powi(n), r_n1 * eta.powi(n + 1))
    })
}

/// Largest attenuation in dB for which `qng` holds, to
/// [`DEPTH_RESOLUTION_DB`]. `qng` must hold on an interval starting at 0.
fn search_depth(mut qng: impl FnMut(f64) -> Result<bool>) -> Result<Depth> {
    if !qng(0.0)? {
        return Ok(Depth::NotQngAtSource);
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while qng(hi)? {
        lo = hi;
        hi *= 2.0;
        if hi > MAX_DEPTH_DB {
            return Err(QngError::Precision(format!(
                "still non-Gaussian after {lo} dB of loss"
            )));
        }
    }
    while hi - lo > DEPTH_RESOLUTION_DB {
        let mid = 0.5 * (lo + hi);
        if qng(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Depth::Finite(lo))
}

pub fn db_to_eta(db: f64) -> f64 {
    10f64.powf(-db / 10.0)
}

/// One point of an attenuation path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathPoint {
    pub db: f64,
    pub eta: f64,
    pub r_n: f64,
    pub r_n1: f64,
}

/// Click probabilities of `dist` after `k * step_db` of loss, for
/// `k = 0, 1, ..` up to `max_db`.
pub fn attenuation_path(
    dist: &PhotonDistribution,
    n: usize,
    channels: usize,
    step_db: f64,
    max_db: f64,
) -> Result<Vec<PathPoint>> {
    if !(step_db > 0.0 && step_db.is_finite()) {
        return Err(QngError::domain(format!(
            "step must be positive, got {step_db} dB"
        )));
    }
    if !(max_db >= 0.0 && max_db.is_finite()) {
        return Err(QngError::domain(format!(
            "maximum attenuation must be non-negative, got {max_db} dB"
        )));
    }
    let steps = (max_db / step_db + 1e-9).floor() as usize;
    (0..=steps)
        .map(|k| {
            let db = k as f64 * step_db;
            let eta = db_to_eta(db);
            let pair = click_probabilities(&attenuate(dist, eta)?, n, channels)?;
            Ok(PathPoint {
                db,
                eta,
                r_n: pair.r_n,
                r_n1: pair.r_n1,
            })
        })
        .collect()
}

/// Largest loss in dB after which `dist` is still above the curve.
pub fn qng_depth(
    dist: &PhotonDistribution,
    n: usize,
    channels: usize,
    curve: &ThresholdCurve,
) -> Result<Depth> {
    if curve.order() != n {
        return Err(QngError::Inconsistent(format!(
            "order {n} requested with a curve of order {}",
            curve.order()
        )));
    }
    let source = click_probabilities(dist, n, channels)?;
    if source.r_n1 == 0.0 {
        // loss never creates (n+1)-fold clicks
        return Ok(if source.r_n > 0.0 {
            Depth::Unbounded
        } else {
            Depth::NotQngAtSource
        });
    }
    search_depth(|db| {
        let pair = click_probabilities(&attenuate(dist, db_to_eta(db))?, n, channels)?;
        corner_above(curve, pair.r_n, pair.r_n1)
    })
}

/// Transmittance below which the Fock state |m> no longer passes the
/// first-order criterion on a two-channel detector.
pub fn fock_single_criterion_transmittance(m: usize) -> Result<f64> {
    if m < 2 {
        return Err(QngError::domain(format!(
            "|{m}> never produces two clicks; its first-order witness holds at any loss"
        )));
    }
    let config = SolverConfig {
        v_min: Some(FOCK_V_MIN),
        ..SolverConfig::default()
    };
    let solver = BoundarySolver::new(1, config)?;
    let fock = PhotonDistribution::fock(m);
    let qng = |eta: f64| -> Result<bool> {
        let pair = click_probabilities(&attenuate(&fock, eta)?, 1, 2)?;
        Ok(pair.r_n > solver.solve(pair.r_n1)?.r_n)
    };
    if !qng(1.0)? {
        return Err(QngError::Unsupported(format!(
            "|{m}> fails the first-order criterion without loss"
        )));
    }
    let (mut lo, mut hi) = (1e-3, 1.0);
    if qng(lo)? {
        return Err(QngError::Unsupported(format!(
            "|{m}> passes the first-order criterion at eta = {lo}"
        )));
    }
    while hi - lo > 1e-4 {
        let mid = 0.5 * (lo + hi);
        if qng(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}
