//! Randomised search for Gaussian states above a threshold curve.
//!
//! Product states of `M` modes are drawn with `beta^2 ~ U(0, 2n)`,
//! `V ~ U(1/(n+2), 1)` and `phi ~ U(0, 2 pi)`, and their click probabilities
//! are compared with the curve. Runs are split into shards with their own
//! ChaCha8 streams, so reports are reproducible regardless of thread count.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detector::inclusion_exclusion_raw;
use crate::error::{QngError, Result};
use crate::gaussian::GaussianModeParams;
use crate::numeric::logspace;
use crate::threshold::{
    default_grid, threshold_exact, threshold_exact_with, CurveSample, GaussianRates, Regime,
    SolverConfig, ThresholdCurve,
};

/// A sample counts as a violation when its `r_n` exceeds the threshold by
/// more than this.
pub const VIOLATION_TOL: f64 = 1e-10;

/// Number of closest samples kept in a report.
pub const CLOSEST_KEPT: usize = 50;

/// Runs per random stream.
pub const SHARD_RUNS: u64 = 1 << 14;

/// Largest mode count covered by the published checks.
pub const TESTED_MODES: usize = 3;

/// One evaluated sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSample {
    pub index: u64,
    pub modes: Vec<GaussianModeParams>,
    pub r_n: f64,
    pub r_n1: f64,
    /// `log10(r_n / threshold)`; negative below the curve.
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub order: usize,
    pub modes: usize,
    pub runs: u64,
    pub seed: u64,
    pub violations: u64,
    /// Largest gap among all compared samples: how close the search came to
    /// the curve. `None` when no sample had `r_n > 0`.
    pub min_signed_log_distance: Option<f64>,
    /// Samples compared against the low-rate asymptote.
    pub asymptotic: u64,
    /// Samples with `r_n1` above the curve range. Those with `r_n` below the
    /// top of the curve are still certainly below it.
    pub out_of_range: u64,
    /// Out-of-range samples that the curve cannot decide.
    pub undecided: u64,
    /// More modes than the published checks covered.
    pub beyond_tested: bool,
    /// Closest samples, largest gap first.
    pub closest_points: Vec<McSample>,
}

/// Grid used for verification curves: the default grid extended to the
/// error rates multimode samples reach.
pub fn verification_grid() -> Vec<f64> {
    let mut g = default_grid();
    g.extend(logspace(1e-2, 0.95, 61).into_iter().skip(1));
    g
}

/// Draws the parameters of `m` modes for criterion order `n`.
pub fn sample_modes<R: Rng>(rng: &mut R, n: usize, m: usize) -> Vec<GaussianModeParams> {
    let v_lo = 1.0 / (n + 2) as f64;
    (0..m)
        .map(|_| {
            let beta2 = rng.random::<f64>() * 2.0 * n as f64;
            let v = v_lo + rng.random::<f64>() * (1.0 - v_lo);
            let phi = rng.random::<f64>() * TAU;
            GaussianModeParams {
                beta: beta2.sqrt(),
                v,
                phi,
            }
        })
        .collect()
}

/// Builds the verification curve of order `n` and checks `runs` samples.
pub fn verify(n: usize, modes: usize, runs: u64, seed: u64) -> Result<McReport> {
    let curve = threshold_exact(n, &verification_grid())?;
    verify_with_curve(&curve, modes, runs, seed)
}

pub fn verify_with_curve(
    curve: &ThresholdCurve,
    modes: usize,
    runs: u64,
    seed: u64,
) -> Result<McReport> {
    let n = curve.order();
    if modes == 0 {
        return Err(QngError::domain("at least one mode is required"));
    }
    if runs == 0 {
        return Err(QngError::domain("at least one run is required"));
    }
    if n + 2 > 64 {
        return Err(QngError::Unsupported(format!(
            "order {n} is beyond the supported range"
        )));
    }
    let shards = runs.div_ceil(SHARD_RUNS);
    let parts: Vec<Tally> = (0..shards)
        .into_par_iter()
        .map(|shard| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(shard);
            let start = shard * SHARD_RUNS;
            let end = (start + SHARD_RUNS).min(runs);
            let mut tally = Tally::default();
            for index in start..end {
                let params = sample_modes(&mut rng, n, modes);
                let ie = inclusion_exclusion_raw(&params, n, n + 1);
                let rates = Rates {
                    r_n: ie.r_n.clamp(0.0, 1.0),
                    r_n1: ie.r_n1.clamp(0.0, 1.0),
                    err_n: ie.err_n,
                    err_n1: ie.err_n1,
                };
                tally.record(curve, index, params, rates);
            }
            tally
        })
        .collect();
    let mut total = Tally::default();
    for p in parts {
        total.absorb(p);
    }
    Ok(total.into_report(n, modes, runs, seed))
}

/// Perturbs a solved boundary point and checks that no neighbour lies above
/// the boundary. `beta` and `1 - V` get relative Gaussian jitter of size
/// `jitter`, `phi` absolute jitter of the same size in radians. The
/// comparison uses a dense local curve around the point.
pub fn boundary_probe(
    n: usize,
    center: &CurveSample,
    jitter: f64,
    trials: u64,
    seed: u64,
) -> Result<McReport> {
    if !(jitter >= 0.0 && jitter.is_finite()) {
        return Err(QngError::domain(format!(
            "jitter must be non-negative, got {jitter}"
        )));
    }
    if trials == 0 {
        return Err(QngError::domain("at least one trial is required"));
    }
    let rates = GaussianRates::new(n)?;
    let t0 = 1.0 - center.v;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples: Vec<(GaussianModeParams, Rates)> = (0..trials)
        .map(|_| {
            let g: [f64; 3] = [
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
            ];
            let beta = center.beta * (1.0 + jitter * g[0]);
            let t = t0 * (1.0 + jitter * g[1]);
            let phi = jitter * g[2];
            let mode = GaussianModeParams {
                beta: beta.abs(),
                v: 1.0 - t,
                phi,
            };
            let r = if phi == 0.0 {
                let (r_n, r_n1) = rates.rates_weak(beta.abs(), t);
                Rates {
                    r_n,
                    r_n1,
                    err_n: 0.0,
                    err_n1: 0.0,
                }
            } else {
                let ie = inclusion_exclusion_raw(std::slice::from_ref(&mode), n, n + 1);
                Rates {
                    r_n: ie.r_n.clamp(0.0, 1.0),
                    r_n1: ie.r_n1.clamp(0.0, 1.0),
                    err_n: ie.err_n,
                    err_n1: ie.err_n1,
                }
            };
            (mode, r)
        })
        .collect();

    // local reference curve spanning the sampled error rates
    let (lo, hi) = samples
        .iter()
        .map(|(_, r)| r.r_n1)
        .filter(|&r| r > 0.0)
        .fold((center.r_n1, center.r_n1), |(a, b), r| (a.min(r), b.max(r)));
    let lo = lo * 0.999;
    let hi = (hi * 1.001).min(0.499);
    let mut grid = logspace(lo, hi, 17);
    grid.push(center.r_n1);
    grid.sort_by(f64::total_cmp);
    grid.dedup_by(|a, b| (*a / *b - 1.0).abs() < 1e-12);
    // the reference maximum must cover every sampled variance
    let v_floor = samples
        .iter()
        .map(|(m, _)| m.v)
        .fold(1.0 / (n + 2) as f64, f64::min);
    let config = SolverConfig {
        v_min: Some(v_floor),
        ..SolverConfig::default()
    };
    let curve = threshold_exact_with(n, &grid, &config)?;

    let mut tally = Tally::default();
    for (index, (mode, r)) in samples.into_iter().enumerate() {
        tally.record(&curve, index as u64, vec![mode], r);
    }
    Ok(tally.into_report(n, 1, trials, seed))
}

#[derive(Debug, Clone, Copy)]
struct Rates {
    r_n: f64,
    r_n1: f64,
    err_n: f64,
    err_n1: f64,
}

#[derive(Debug, Default)]
struct Tally {
    violations: u64,
    asymptotic: u64,
    out_of_range: u64,
    undecided: u64,
    closest: Vec<McSample>,
}

impl Tally {
    fn record(
        &mut self,
        curve: &ThresholdCurve,
        index: u64,
        modes: Vec<GaussianModeParams>,
        r: Rates,
    ) {
        let (_, max) = curve.range();
        let top = curve.samples().last().map_or(0.0, |s| s.r_n_max);
        if r.r_n1 > max {
            self.out_of_range += 1;
            if r.r_n - r.err_n > top {
                self.undecided += 1;
            }
            return;
        }
        // conservative: lowest plausible r_n against the highest plausible
        // threshold
        let r_n1_hi = (r.r_n1 + r.err_n1).min(max);
        let q_hi = curve.threshold_at(r_n1_hi).expect("inside the curve range");
        if r.r_n - r.err_n > q_hi.r_n + VIOLATION_TOL {
            self.violations += 1;
        }
        let q = curve.threshold_at(r.r_n1).expect("inside the curve range");
        if q.regime == Regime::Asymptotic {
            self.asymptotic += 1;
        }
        if r.r_n <= 0.0 || q.r_n <= 0.0 {
            return;
        }
        let gap = r.r_n.log10() - q.r_n.log10();
        if self.closest.len() < CLOSEST_KEPT || gap > self.closest[self.closest.len() - 1].gap {
            self.closest.push(McSample {
                index,
                modes,
                r_n: r.r_n,
                r_n1: r.r_n1,
                gap,
            });
            sort_closest(&mut self.closest);
            self.closest.truncate(CLOSEST_KEPT);
        }
    }

    fn absorb(&mut self, other: Tally) {
        self.violations += other.violations;
        self.asymptotic += other.asymptotic;
        self.out_of_range += other.out_of_range;
        self.undecided += other.undecided;
        self.closest.extend(other.closest);
        sort_closest(&mut self.closest);
        self.closest.truncate(CLOSEST_KEPT);
    }

    fn into_report(self, order: usize, modes: usize, runs: u64, seed: u64) -> McReport {
        McReport {
            order,
            modes,
            runs,
            seed,
            violations: self.violations,
            min_signed_log_distance: self.closest.first().map(|s| s.gap),
            asymptotic: self.asymptotic,
            out_of_range: self.out_of_range,
            undecided: self.undecided,
            beyond_tested: modes > TESTED_MODES,
            closest_points: self.closest,
        }
    }
}

fn sort_closest(v: &mut [McSample]) {
    v.sort_by(|a, b| b.gap.total_cmp(&a.gap).then(a.index.cmp(&b.index)));
}
