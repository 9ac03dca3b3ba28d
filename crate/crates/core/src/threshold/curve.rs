use serde::{Deserialize, Serialize};

use super::approx::closed_form_at;
use super::FunctionalVerdict;
use crate::detector::ClickPair;
use crate::error::{QngError, Result};
use crate::hermite::HermiteAnchor;

/// Below the sampled range the closed-form asymptote is used, scaled up by
/// this factor on top of its match to the lowest sample.
pub const ASYMPTOTIC_SAFETY_FACTOR: f64 = 1.05;

/// One sample of a threshold curve with the Gaussian state attaining it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveSample {
    pub r_n1: f64,
    pub r_n_max: f64,
    pub beta: f64,
    pub v: f64,
    pub residual: f64,
}

/// How a threshold value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// Interpolated between solved samples.
    Sampled,
    /// Below the sampled range; closed-form asymptote with safety margin.
    Asymptotic,
    /// `r_n1 = 0`: every positive `r_n` is above the threshold.
    ZeroError,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveQuery {
    pub r_n: f64,
    pub regime: Regime,
}

/// Sampled boundary `r_n1 -> r_n_max` with monotone cubic interpolation in
/// log–log coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CurveData")]
pub struct ThresholdCurve {
    order: usize,
    samples: Vec<CurveSample>,
    anchor: HermiteAnchor,
    #[serde(skip)]
    knots: Knots,
}

/// Serialised form; interpolation data is rebuilt on load.
#[derive(Deserialize)]
struct CurveData {
    order: usize,
    samples: Vec<CurveSample>,
}

impl TryFrom<CurveData> for ThresholdCurve {
    type Error = QngError;

    fn try_from(d: CurveData) -> Result<Self> {
        ThresholdCurve::from_samples(d.order, d.samples)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
struct Knots {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl Knots {
    fn build(samples: &[CurveSample]) -> Self {
        let x: Vec<f64> = samples.iter().map(|s| s.r_n1.ln()).collect();
        let y: Vec<f64> = samples.iter().map(|s| s.r_n_max.ln()).collect();
        let d = pchip_slopes(&x, &y);
        Knots { x, y, d }
    }

    fn eval(&self, xq: f64) -> f64 {
        let n = self.x.len();
        if n == 1 {
            return self.y[0];
        }
        let i = match self.x.partition_point(|&x| x <= xq) {
            0 => 0,
            k if k >= n => n - 2,
            k => k - 1,
        };
        let h = self.x[i + 1] - self.x[i];
        let s = (xq - self.x[i]) / h;
        let (h00, h10, h01, h11) = hermite_basis(s);
        h00 * self.y[i] + h10 * h * self.d[i] + h01 * self.y[i + 1] + h11 * h * self.d[i + 1]
    }

    fn slope(&self, xq: f64) -> f64 {
        let n = self.x.len();
        if n == 1 {
            return self.d[0];
        }
        let i = match self.x.partition_point(|&x| x <= xq) {
            0 => 0,
            k if k >= n => n - 2,
            k => k - 1,
        };
        let h = self.x[i + 1] - self.x[i];
        let s = (xq - self.x[i]) / h;
        let dy = self.y[i + 1] - self.y[i];
        // derivative of the cubic Hermite segment
        let d00 = 6.0 * s * s - 6.0 * s;
        let d10 = 3.0 * s * s - 4.0 * s + 1.0;
        let d11 = 3.0 * s * s - 2.0 * s;
        (-d00 * dy) / h + d10 * self.d[i] + d11 * self.d[i + 1]
    }
}

fn hermite_basis(s: f64) -> (f64, f64, f64, f64) {
    let s2 = s * s;
    let s3 = s2 * s;
    (
        2.0 * s3 - 3.0 * s2 + 1.0,
        s3 - 2.0 * s2 + s,
        -2.0 * s3 + 3.0 * s2,
        s3 - s2,
    )
}

/// Fritsch–Carlson derivative estimates (as in PCHIP) that keep a cubic
/// Hermite interpolant monotone on monotone data.
fn pchip_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n == 1 {
        return vec![0.0];
    }
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
    if n == 2 {
        return vec![delta[0]; 2];
    }
    let mut d = vec![0.0; n];
    for k in 1..n - 1 {
        if delta[k - 1] * delta[k] <= 0.0 {
            d[k] = 0.0;
        } else {
            let w1 = 2.0 * h[k] + h[k - 1];
            let w2 = h[k] + 2.0 * h[k - 1];
            d[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
        }
    }
    let end = |h0: f64, h1: f64, d0: f64, d1: f64| {
        let e = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
        if e.signum() != d0.signum() {
            0.0
        } else if d0.signum() != d1.signum() && e.abs() > 3.0 * d0.abs() {
            3.0 * d0
        } else {
            e
        }
    };
    d[0] = end(h[0], h[1], delta[0], delta[1]);
    d[n - 1] = end(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    d
}

impl ThresholdCurve {
    /// Builds a curve from samples sorted by `r_n1`; both coordinates must be
    /// strictly increasing and inside (0, 1].
    pub fn from_samples(order: usize, samples: Vec<CurveSample>) -> Result<Self> {
        if samples.is_empty() {
            return Err(QngError::domain(
                "a threshold curve needs at least one sample",
            ));
        }
        for s in &samples {
            if !(s.r_n1 > 0.0 && s.r_n1 <= 1.0 && s.r_n_max > 0.0 && s.r_n_max <= 1.0) {
                return Err(QngError::domain(format!(
                    "curve sample ({:e}, {:e}) is outside (0, 1]",
                    s.r_n1, s.r_n_max
                )));
            }
        }
        for w in samples.windows(2) {
            if !(w[1].r_n1 > w[0].r_n1 && w[1].r_n_max > w[0].r_n_max) {
                return Err(QngError::NonMonotone(format!(
                    "order {order}: ({:e}, {:e}) followed by ({:e}, {:e})",
                    w[0].r_n1, w[0].r_n_max, w[1].r_n1, w[1].r_n_max
                )));
            }
        }
        let anchor = HermiteAnchor::new(order)?;
        let knots = Knots::build(&samples);
        Ok(ThresholdCurve {
            order,
            samples,
            anchor,
            knots,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn samples(&self) -> &[CurveSample] {
        &self.samples
    }

    pub fn anchor(&self) -> &HermiteAnchor {
        &self.anchor
    }

    /// `(min, max)` of the sampled `r_n1` values.
    pub fn range(&self) -> (f64, f64) {
        (
            self.samples[0].r_n1,
            self.samples[self.samples.len() - 1].r_n1,
        )
    }

    /// Factor lifting the closed form onto the lowest sample. The exact
    /// boundary approaches the closed form from above as `r_n1` falls, so
    /// the lifted asymptote stays above the boundary below the range.
    fn asymptote_scale(&self) -> f64 {
        let first = self.samples[0];
        (first.r_n_max / closed_form_at(&self.anchor, first.r_n1)).max(1.0)
    }

    /// Boundary value without safety margin: interpolated inside the range,
    /// lifted closed-form asymptote below it.
    pub fn boundary(&self, r_n1: f64) -> Result<f64> {
        let (lo, hi) = self.range();
        if !(r_n1 >= 0.0) {
            return Err(QngError::domain(format!(
                "r_n1 must be non-negative, got {r_n1}"
            )));
        }
        if r_n1 > hi {
            return Err(QngError::OutOfRange { r_n1, max: hi });
        }
        if r_n1 == 0.0 {
            return Ok(0.0);
        }
        if r_n1 < lo {
            return Ok(closed_form_at(&self.anchor, r_n1) * self.asymptote_scale());
        }
        Ok(self.knots.eval(r_n1.ln()).exp())
    }

    /// Threshold `r_n` used for decisions at `r_n1`.
    pub fn threshold_at(&self, r_n1: f64) -> Result<CurveQuery> {
        let raw = self.boundary(r_n1)?;
        let (lo, _) = self.range();
        let regime = if r_n1 == 0.0 {
            Regime::ZeroError
        } else if r_n1 < lo {
            Regime::Asymptotic
        } else {
            Regime::Sampled
        };
        let r_n = if regime == Regime::Asymptotic {
            raw * ASYMPTOTIC_SAFETY_FACTOR
        } else {
            raw
        };
        Ok(CurveQuery { r_n, regime })
    }

    /// The `r_n1` at which the boundary reaches `r_n` (inverse of
    /// [`boundary`](Self::boundary)).
    pub fn preimage(&self, r_n: f64) -> Result<f64> {
        if !(r_n >= 0.0) {
            return Err(QngError::domain(format!(
                "r_n must be non-negative, got {r_n}"
            )));
        }
        if r_n == 0.0 {
            return Ok(0.0);
        }
        let first = self.samples[0];
        let last = self.samples[self.samples.len() - 1];
        if r_n > last.r_n_max {
            return Err(QngError::OutOfRange {
                r_n1: f64::NAN,
                max: last.r_n1,
            });
        }
        if r_n < first.r_n_max {
            // invert the closed form r_n^(n+2) = H^4 (r_n1 / (2 (n+1)^3))^n
            let n = self.order as f64;
            let r_n = r_n / self.asymptote_scale();
            let ln = ((n + 2.0) * r_n.ln() - self.anchor.h_n_4().ln()) / n
                + (2.0 * (n + 1.0).powi(3)).ln();
            return Ok(ln.exp().min(first.r_n1));
        }
        let target = r_n.ln();
        let (mut a, mut b) = (first.r_n1.ln(), last.r_n1.ln());
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if self.knots.eval(m) < target {
                a = m;
            } else {
                b = m;
            }
            if b - a < 1e-14 {
                break;
            }
        }
        Ok((0.5 * (a + b)).exp())
    }

    /// Local log–log slope `d ln r_n1 / d ln r_n` of the interpolant; the
    /// asymptote has slope (n + 2) / n.
    pub fn log_slope(&self, r_n1: f64) -> f64 {
        let (lo, _) = self.range();
        if r_n1 < lo {
            let n = self.order as f64;
            return (n + 2.0) / n;
        }
        1.0 / self.knots.slope(r_n1.ln())
    }

    /// QNG iff `r_n` lies strictly above the threshold at `r_n1`.
    pub fn check(&self, pair: &ClickPair) -> Result<(FunctionalVerdict, Regime)> {
        if pair.order != self.order {
            return Err(QngError::Inconsistent(format!(
                "click pair of order {} tested against a curve of order {}",
                pair.order, self.order
            )));
        }
        let q = self.threshold_at(pair.r_n1)?;
        let verdict = if pair.r_n > q.r_n {
            FunctionalVerdict::Qng
        } else {
            FunctionalVerdict::NotQng
        };
        Ok((verdict, q.regime))
    }
}
