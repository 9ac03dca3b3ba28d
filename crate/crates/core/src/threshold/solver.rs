use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::curve::{CurveSample, ThresholdCurve};
use crate::detector::TransferRows;
use crate::error::{QngError, Result};
use crate::gaussian::{
    mean_photons_coherent, photodistribution_gradient_weak, squeezed_probs_weak, MAX_TRUNCATION,
};
use crate::hermite::nonnegative_roots;
use crate::numeric::{brent, golden_min, logspace};

/// Mass neglected when truncating photon-number sums inside the solver.
const SOLVER_TAIL_TOL: f64 = 1e-30;

/// Knobs of the boundary search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Number of variance slices, log-spaced in `1 - V`.
    pub v_slices: usize,
    /// Smallest `1 - V` considered.
    pub t_min: f64,
    /// Grid points per slice in the Hermite argument before the outward sweep.
    pub z_scan: usize,
    /// Largest displacement considered.
    pub beta_max: f64,
    /// Smallest variance considered; `None` means 1/(n+2).
    pub v_min: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            v_slices: 400,
            t_min: 1e-6,
            z_scan: 80,
            beta_max: 40.0,
            v_min: None,
        }
    }
}

/// Click probabilities of single `phi = 0` Gaussian modes on an (n+1)-channel
/// detector, through the cancellation-free photon-number route.
#[derive(Debug, Clone)]
pub struct GaussianRates {
    order: usize,
    rows: TransferRows,
}

/// Rates with their partial derivatives in `beta` and `v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateGradient {
    pub beta: f64,
    /// `1 - v`.
    pub t: f64,
    pub r_n: f64,
    pub r_n1: f64,
    pub dn_beta: f64,
    pub dn_v: f64,
    pub dn1_beta: f64,
    pub dn1_v: f64,
}

impl RateGradient {
    /// d r_n / d v along the curve of constant r_n1.
    pub fn constrained_slope(&self) -> f64 {
        self.dn_v - self.dn_beta * self.dn1_v / self.dn1_beta
    }

    /// The Lagrange condition d_beta r_n d_v r_n1 = d_v r_n d_beta r_n1 as
    /// the sine of the angle between the two gradients. The gradients are
    /// taken in (ln z, ln t), with z = beta s(t) the Hermite argument and
    /// t = 1 - v, where the constraint stays well conditioned near its fold.
    pub fn signed_extremal_residual(&self) -> f64 {
        let t = self.t;
        // d ln s / d ln t
        let kappa = 0.5 * (-t / (1.0 - t) - 1.0 + t / (2.0 - t));
        let log_grad = |d_beta: f64, d_v: f64| {
            let along_z = self.beta * d_beta;
            (along_z, -t * d_v - kappa * along_z)
        };
        let (z0, t0) = log_grad(self.dn_beta, self.dn_v);
        let (z1, t1) = log_grad(self.dn1_beta, self.dn1_v);
        let scale = z0.hypot(t0) * z1.hypot(t1);
        if scale == 0.0 {
            0.0
        } else {
            (z0 * t1 - t0 * z1) / scale
        }
    }

    pub fn extremal_residual(&self) -> f64 {
        self.signed_extremal_residual().abs()
    }
}

impl GaussianRates {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(QngError::domain("criterion order must be >= 1"));
        }
        Ok(GaussianRates {
            order: n,
            rows: TransferRows::new(n, n + 1, MAX_TRUNCATION)?,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// `(r_n, r_n1)` for the mode `(beta, v, phi = 0)`.
    pub fn rates(&self, beta: f64, v: f64) -> (f64, f64) {
        if v >= 1.0 {
            let mean = mean_photons_coherent(beta);
            let dist = crate::gaussian::coherent_limit_photodistribution(mean, MAX_TRUNCATION)
                .expect("mean is non-negative");
            return self.rows.apply(dist.probs());
        }
        self.rates_weak(beta, 1.0 - v)
    }

    /// [`rates`](Self::rates) with `t = 1 - v` in `(0, 1)` given directly.
    pub fn rates_weak(&self, beta: f64, t: f64) -> (f64, f64) {
        let probs = squeezed_probs_weak(beta, t, SOLVER_TAIL_TOL);
        self.rows.apply(&probs)
    }

    pub fn rates_with_gradient(&self, beta: f64, v: f64) -> RateGradient {
        self.gradient_weak(beta, 1.0 - v)
    }

    /// [`rates_with_gradient`](Self::rates_with_gradient) with `t = 1 - v`.
    pub fn gradient_weak(&self, beta: f64, t: f64) -> RateGradient {
        let g = photodistribution_gradient_weak(beta, t, SOLVER_TAIL_TOL);
        let (r_n, r_n1) = self.rows.apply(&g.probs);
        let (dn_beta, dn1_beta) = self.rows.apply(&g.d_beta);
        let (dn_v, dn1_v) = self.rows.apply(&g.d_v);
        RateGradient {
            beta,
            t,
            r_n,
            r_n1,
            dn_beta,
            dn_v,
            dn1_beta,
            dn1_v,
        }
    }
}

/// A solved point of the threshold boundary with its Gaussian witness state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPoint {
    pub r_n1: f64,
    pub r_n: f64,
    pub beta: f64,
    pub v: f64,
    pub residual: f64,
    /// The optimum sits on the edge of the variance sweep, where the
    /// extremal condition need not hold.
    pub at_edge: bool,
}

impl From<BoundaryPoint> for CurveSample {
    fn from(p: BoundaryPoint) -> Self {
        CurveSample {
            r_n1: p.r_n1,
            r_n_max: p.r_n,
            beta: p.beta,
            v: p.v,
            residual: p.residual,
        }
    }
}

/// The grid used when no other is requested: 200 log-spaced error
/// probabilities from 1e-16 to 1e-2.
pub fn default_grid() -> Vec<f64> {
    logspace(1e-16, 1e-2, 200)
}

/// Traces the exact threshold of order `n` at the given error probabilities.
pub fn threshold_exact(n: usize, r_n1_grid: &[f64]) -> Result<ThresholdCurve> {
    threshold_exact_with(n, r_n1_grid, &SolverConfig::default())
}

pub fn threshold_exact_with(
    n: usize,
    r_n1_grid: &[f64],
    config: &SolverConfig,
) -> Result<ThresholdCurve> {
    if let Some(bad) = r_n1_grid.iter().find(|&&r| !(r > 0.0 && r < 1.0)) {
        return Err(QngError::domain(format!(
            "grid values must lie in (0, 1), got {bad}"
        )));
    }
    let solver = BoundarySolver::new(n, *config)?;
    let points: Vec<BoundaryPoint> = r_n1_grid
        .par_iter()
        .map(|&r| solver.solve(r))
        .collect::<Result<_>>()?;
    let mut samples: Vec<CurveSample> = points.into_iter().map(CurveSample::from).collect();
    samples.sort_by(|a, b| a.r_n1.total_cmp(&b.r_n1));
    ThresholdCurve::from_samples(n, samples)
}

/// Maximises `r_n` over `phi = 0` Gaussian modes at fixed `r_n1`.
#[derive(Debug, Clone)]
pub struct BoundarySolver {
    rates: GaussianRates,
    config: SolverConfig,
    z_hi: f64,
    hermite_roots: Vec<f64>,
}

impl BoundarySolver {
    pub fn new(n: usize, config: SolverConfig) -> Result<Self> {
        let rates = GaussianRates::new(n)?;
        // beyond the largest Hermite root the error rate grows monotonically
        let z_hi = ((4 * (n + 2) + 2) as f64).sqrt() + 1.0;
        let hermite_roots = nonnegative_roots(n + 1)?
            .into_iter()
            .filter(|&z| z > 0.0)
            .collect();
        Ok(BoundarySolver {
            rates,
            config,
            z_hi,
            hermite_roots,
        })
    }

    pub fn rates(&self) -> &GaussianRates {
        &self.rates
    }

    fn t_max(&self) -> f64 {
        1.0 - self
            .config
            .v_min
            .unwrap_or(1.0 / (self.rates.order + 2) as f64)
    }

    /// All displacements on the slice `t = 1 - v` where `r_n1` equals `target`.
    fn slice_roots(&self, t: f64, target: f64) -> Vec<f64> {
        let s = Self::hermite_scale(t);
        let f = |beta: f64| self.rates.rates_weak(beta, t).1 - target;
        let mut roots = Vec::new();
        let (mut prev_b, mut prev_f) = (0.0, f(0.0));
        let mut visit = |b: f64, prev_b: &mut f64, prev_f: &mut f64| {
            let fb = f(b);
            if prev_f.signum() != fb.signum() {
                if let Ok(r) = brent(f, *prev_b, b, 1e-15 * b, 200) {
                    roots.push(r);
                }
            }
            *prev_b = b;
            *prev_f = fb;
        };
        let beta_hi = (self.z_hi / s).min(self.config.beta_max);
        for i in 1..=self.config.z_scan {
            visit(
                beta_hi * i as f64 / self.config.z_scan as f64,
                &mut prev_b,
                &mut prev_f,
            );
        }
        let mut b = beta_hi;
        while b < self.config.beta_max && prev_f < 0.0 {
            b = (b * 1.3).min(self.config.beta_max);
            visit(b, &mut prev_b, &mut prev_f);
        }
        roots
    }

    /// Scaling between displacement and Hermite argument, `z = s beta`.
    fn hermite_scale(t: f64) -> f64 {
        let v = 1.0 - t;
        (v / (2.0 * t * (2.0 - t))).sqrt()
    }

    /// Points `(r_n, beta, t)` on the ray of constant Hermite argument `z`
    /// where `r_n1 = target`.
    fn ray_roots(&self, z: f64, target: f64, ts: &[f64], out: &mut Vec<(f64, f64, f64)>) {
        let beta_of = |lt: f64| z / Self::hermite_scale(lt.exp());
        let f = |lt: f64| {
            let b = beta_of(lt);
            if b > self.config.beta_max {
                return f64::NAN;
            }
            self.rates.rates_weak(b, lt.exp()).1 - target
        };
        let mut prev: Option<(f64, f64)> = None;
        for &t in ts {
            let lt = t.ln();
            let ft = f(lt);
            if ft.is_nan() {
                prev = None;
                continue;
            }
            if let Some((pl, pf)) = prev {
                if pf.signum() != ft.signum() {
                    if let Ok(r) = brent(f, pl, lt, 1e-14, 200) {
                        let (b, t) = (beta_of(r), r.exp());
                        out.push((self.rates.rates_weak(b, t).0, b, t));
                    }
                }
            }
            prev = Some((lt, ft));
        }
    }

    /// Coarse candidates for the constrained maximum, from variance slices
    /// and from rays of constant Hermite argument. The optimum sits near a
    /// fold of the constraint seen from the variance slices, so both views
    /// are needed.
    fn candidates(&self, target: f64) -> (Vec<(f64, f64, f64)>, Vec<(f64, f64, f64)>) {
        let mut found = Vec::new();
        for t in logspace(self.config.t_min, self.t_max(), self.config.v_slices) {
            for b in self.slice_roots(t, target) {
                found.push((self.rates.rates_weak(b, t).0, b, t));
            }
        }
        let ts = logspace(self.config.t_min, self.t_max(), 2 * self.config.z_scan);
        let z_far = self.config.beta_max * Self::hermite_scale(self.config.t_min);
        let mut zs: Vec<f64> = (1..=self.config.z_scan)
            .map(|i| self.z_hi * i as f64 / self.config.z_scan as f64)
            .collect();
        let mut z = self.z_hi;
        while z < z_far {
            z *= 1.15;
            zs.push(z);
        }
        for z in zs {
            self.ray_roots(z, target, &ts, &mut found);
        }
        // at low rates the optimum hugs a root of H_{n+1}, too narrowly for
        // the ray grid to resolve
        let mut on_roots = Vec::new();
        for &z in &self.hermite_roots {
            self.ray_roots(z, target, &ts, &mut on_roots);
        }
        found.extend_from_slice(&on_roots);
        found.sort_by(|a, b| b.0.total_cmp(&a.0));
        (found, on_roots)
    }

    pub fn solve(&self, target: f64) -> Result<BoundaryPoint> {
        let (found, on_roots) = self.candidates(target);
        let &(best_rn, best_beta, best_t) = found.first().ok_or_else(|| {
            QngError::RootFinding(format!(
                "order {}: no Gaussian state reaches r_n1 = {target:e} on any variance slice",
                self.rates.order
            ))
        })?;
        // polish a few distinct leading candidates; the coarse maximum may
        // sit on a different local ridge than the true one
        let mut starts: Vec<(f64, f64)> = Vec::new();
        for (i, &(_, b, t)) in found.iter().take(4).chain(&on_roots).enumerate() {
            let z = b * Self::hermite_scale(t);
            if i >= 4
                || starts
                    .iter()
                    .all(|&(sz, st)| (sz / z - 1.0).abs() > 1e-2 || (st / t - 1.0).abs() > 1e-2)
            {
                starts.push((z, t));
            }
        }
        let mut best: Option<BoundaryPoint> = None;
        for (z, t) in starts {
            if let Some(p) = self.refine(target, z, t) {
                if p.r_n >= best_rn * (1.0 - 1e-9) && best.is_none_or(|q| p.r_n > q.r_n) {
                    best = Some(p);
                }
            }
        }
        Ok(best.unwrap_or_else(|| {
            let g = self.rates.gradient_weak(best_beta, best_t);
            BoundaryPoint {
                r_n1: g.r_n1,
                r_n: g.r_n,
                beta: best_beta,
                v: 1.0 - best_t,
                residual: g.extremal_residual(),
                at_edge: true,
            }
        }))
    }

    /// `1 - V` on the ray `z` where `r_n1 = target`, on the branch through `t_guess`.
    fn ray_t(&self, z: f64, target: f64, t_guess: f64) -> Option<f64> {
        let lt_max = self.t_max().ln();
        let f = |lt: f64| {
            let b = z / Self::hermite_scale(lt.exp());
            self.rates.rates_weak(b, lt.exp()).1 - target
        };
        let lt0 = t_guess.ln().min(lt_max);
        let f0 = f(lt0);
        if f0 == 0.0 {
            return Some(lt0.exp());
        }
        let mut step = 0.01;
        for _ in 0..40 {
            let (lo, hi) = if f0 < 0.0 {
                (lt0, (lt0 + step).min(lt_max))
            } else {
                (lt0 - step, lt0)
            };
            let (flo, fhi) = (f(lo), f(hi));
            if flo.signum() != fhi.signum() {
                return brent(f, lo, hi, 0.0, 200).ok().map(f64::exp);
            }
            if hi >= lt_max && f0 < 0.0 {
                return None;
            }
            step *= 2.0;
        }
        None
    }

    /// Maximises `r_n` along the constraint parametrised by the Hermite
    /// argument, starting from the ray `z0` and solving the extremal
    /// condition by bracketing.
    fn refine(&self, target: f64, z0: f64, t0: f64) -> Option<BoundaryPoint> {
        let t_last = std::cell::Cell::new(t0);
        let point = |z: f64| -> Option<(f64, f64)> {
            let t = self.ray_t(z, target, t_last.get())?;
            t_last.set(t);
            Some((z / Self::hermite_scale(t), t))
        };
        let dz = (2.0 * self.z_hi / self.config.z_scan as f64)
            .max(0.15 * z0)
            .min(0.9 * z0);
        let neg_rn = |z: f64| match point(z) {
            Some((b, t)) => -self.rates.rates_weak(b, t).0,
            None => f64::INFINITY,
        };
        let (zg, _) = golden_min(neg_rn, z0 - dz, z0 + dz, 1e-10 * z0);
        let res = |z: f64| match point(z) {
            Some((b, t)) => self.rates.gradient_weak(b, t).signed_extremal_residual(),
            None => f64::NAN,
        };
        t_last.set(t0);
        point(zg)?;
        let r0 = res(zg);
        let mut h = 1e-8 * zg;
        let z_star = loop {
            let t_mid = t_last.get();
            let (lo, hi) = (zg - h, zg + h);
            let (rlo, rhi) = (res(lo), res(hi));
            t_last.set(t_mid);
            if rlo.is_nan() || rhi.is_nan() || h > dz {
                return None;
            }
            if r0 == 0.0 {
                break zg;
            }
            // the maximum is where the residual changes sign
            if rlo.signum() != rhi.signum() {
                let (a, b) = if rlo.signum() != r0.signum() {
                    (lo, zg)
                } else {
                    (zg, hi)
                };
                break brent(res, a, b, 1e-16 * zg, 200).ok()?;
            }
            h *= 4.0;
        };
        let (beta, t) = point(z_star)?;
        let g = self.rates.gradient_weak(beta, t);
        Some(BoundaryPoint {
            r_n1: target,
            r_n: g.r_n,
            beta,
            v: 1.0 - t,
            residual: g.extremal_residual(),
            at_edge: false,
        })
    }
}
