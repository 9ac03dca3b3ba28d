//! Physicists' Hermite polynomials in log–sign form.

use serde::{Deserialize, Serialize};

use crate::error::{QngError, Result};
use crate::numeric::brent;

/// A real number stored as `sign * exp(ln_abs)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogSigned {
    pub ln_abs: f64,
    pub sign: i8,
}

impl LogSigned {
    pub const ZERO: LogSigned = LogSigned {
        ln_abs: f64::NEG_INFINITY,
        sign: 0,
    };

    pub fn from_value(x: f64) -> Self {
        if x == 0.0 {
            Self::ZERO
        } else {
            LogSigned {
                ln_abs: x.abs().ln(),
                sign: if x > 0.0 { 1 } else { -1 },
            }
        }
    }

    pub fn value(&self) -> f64 {
        self.sign as f64 * self.ln_abs.exp()
    }
}

const RESCALE_HI: f64 = 1e150;
const RESCALE_LO: f64 = 1e-150;

/// Yields H_0(x), H_1(x), ... through the three-term recurrence
/// H_{k+1} = 2x H_k - 2k H_{k-1}, carried with a running log scale so that
/// neither overflow nor underflow occurs.
#[derive(Debug, Clone)]
pub struct HermiteIter {
    x: f64,
    k: usize,
    prev: f64,
    cur: f64,
    scale: f64,
}

impl HermiteIter {
    pub fn new(x: f64) -> Self {
        HermiteIter {
            x,
            k: 0,
            prev: 0.0,
            cur: 1.0,
            scale: 0.0,
        }
    }
}

impl Iterator for HermiteIter {
    type Item = LogSigned;

    fn next(&mut self) -> Option<LogSigned> {
        if self.k > 0 {
            let next = 2.0 * self.x * self.cur - 2.0 * (self.k - 1) as f64 * self.prev;
            self.prev = self.cur;
            self.cur = next;
            let a = next.abs();
            if a > RESCALE_HI || (a < RESCALE_LO && a > 0.0) {
                let s = a.ln();
                self.scale += s;
                let f = (-s).exp();
                self.cur *= f;
                self.prev *= f;
            }
        }
        self.k += 1;
        let mut v = LogSigned::from_value(self.cur);
        v.ln_abs += self.scale;
        Some(v)
    }
}

/// H_0(x) .. H_n(x) in log–sign form.
pub fn hermite_sequence(n: usize, x: f64) -> Vec<LogSigned> {
    HermiteIter::new(x).take(n + 1).collect()
}

/// H_n(x) as (ln |H_n(x)|, sign).
pub fn hermite_eval(n: usize, x: f64) -> LogSigned {
    *hermite_sequence(n, x)
        .last()
        .expect("sequence has n + 1 entries")
}

/// H_n(x) as a plain float. Overflows for large arguments.
pub fn hermite_value(n: usize, x: f64) -> f64 {
    hermite_eval(n, x).value()
}

/// The Hermite anchor of order n: the root x* of H_{n+1} at which |H_n| is
/// largest, with H_n(x*)^2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HermiteAnchor {
    pub order: usize,
    pub x_star: f64,
    pub h_n_sq: f64,
}

impl HermiteAnchor {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Ok(HermiteAnchor {
                order: 0,
                x_star: 0.0,
                h_n_sq: 1.0,
            });
        }
        let roots = nonnegative_roots(n + 1)?;
        let mut best: Option<(f64, f64)> = None;
        for x in roots {
            let h = hermite_value(n, x);
            let hsq = h * h;
            best = match best {
                None => Some((x, hsq)),
                Some((bx, bh)) => {
                    // ties within 1e-12 go to the larger root
                    if hsq > bh * (1.0 + 1e-12) || ((hsq - bh).abs() <= 1e-12 * bh && x > bx) {
                        Some((x, hsq))
                    } else {
                        Some((bx, bh))
                    }
                }
            };
        }
        let (x_star, h_n_sq) = best.ok_or_else(|| {
            QngError::RootFinding(format!("no non-negative roots found for H_{}", n + 1))
        })?;
        Ok(HermiteAnchor {
            order: n,
            x_star,
            h_n_sq,
        })
    }

    /// H_n(x*)^4, the constant in the low-rate threshold asymptote.
    pub fn h_n_4(&self) -> f64 {
        self.h_n_sq * self.h_n_sq
    }
}

/// Non-negative roots of H_m, ascending, located by bracketing sign changes
/// on [0, sqrt(4m + 2)] and refining with Brent's method.
pub fn nonnegative_roots(m: usize) -> Result<Vec<f64>> {
    let mut roots = Vec::new();
    if m == 0 {
        return Ok(roots);
    }
    if m % 2 == 1 {
        roots.push(0.0);
    }
    let upper = ((4 * m + 2) as f64).sqrt();
    let steps = 4000;
    let h = upper / steps as f64;
    // start just past zero so the odd-order root at the origin is not re-found
    let mut a = if m % 2 == 1 { 0.5 * h } else { 0.0 };
    let mut fa = hermite_value(m, a);
    let mut b = h;
    while b <= upper + 0.5 * h {
        let fb = hermite_value(m, b);
        if fa.signum() != fb.signum() && fa != 0.0 {
            let r = brent(|x| hermite_value(m, x), a, b, 1e-15, 200)?;
            roots.push(r);
        }
        a = b;
        fa = fb;
        b += h;
    }
    let expected = m.div_ceil(2);
    if roots.len() != expected {
        return Err(QngError::RootFinding(format!(
            "found {} non-negative roots of H_{m}, expected {expected}",
            roots.len()
        )));
    }
    Ok(roots)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn low_orders_match_explicit_polynomials() {
        for &x in &[-1.3, 0.0, 0.4, 2.5] {
            assert_eq!(hermite_value(0, x), 1.0);
            assert!((hermite_value(1, x) - 2.0 * x).abs() < 1e-14);
            assert!((hermite_value(2, x) - (4.0 * x * x - 2.0)).abs() < 1e-13);
            let h3 = 8.0 * x * x * x - 12.0 * x;
            assert!((hermite_value(3, x) - h3).abs() < 1e-12 * (1.0 + h3.abs()));
        }
    }

    #[test]
    fn known_roots_vanish() {
        assert!(hermite_value(2, 0.5f64.sqrt()).abs() < 1e-14);
        assert!(hermite_value(3, 1.5f64.sqrt()).abs() < 1e-13);
        assert_eq!(hermite_eval(3, 0.0).sign, 0);
    }

    #[test]
    fn log_form_survives_large_orders() {
        // H_200(25) overflows when computed naively; 25 is past the largest root
        let v = hermite_eval(200, 25.0);
        assert!(v.ln_abs.is_finite());
        assert_eq!(v.sign, 1);
        // leading-term check: ln H_n(x) ~ n ln(2x) for x >> sqrt(n)
        let w = hermite_eval(20, 1e3);
        assert!((w.ln_abs - 20.0 * (2e3f64).ln()).abs() < 1e-3);
    }

    #[test]
    fn anchors_for_small_orders() {
        let a1 = HermiteAnchor::new(1).unwrap();
        assert!((a1.x_star - 0.5f64.sqrt()).abs() < 1e-14);
        assert!((a1.h_n_sq - 2.0).abs() < 1e-12);
        let a2 = HermiteAnchor::new(2).unwrap();
        assert!((a2.x_star - 1.5f64.sqrt()).abs() < 1e-14);
        assert!((a2.h_n_sq - 16.0).abs() < 1e-11);
        let a0 = HermiteAnchor::new(0).unwrap();
        assert_eq!((a0.x_star, a0.h_n_sq), (0.0, 1.0));
    }

    #[test]
    fn anchors_are_roots_up_to_order_twenty() {
        for n in 1..=20 {
            let a = HermiteAnchor::new(n).unwrap();
            let h = hermite_value(n + 1, a.x_star);
            let scale = hermite_value(n, a.x_star).abs() * 2.0 * (n + 1) as f64;
            assert!(h.abs() <= 1e-12 * scale, "n={n}: H_(n+1)(x*) = {h:e}");
            assert!(a.x_star >= 0.0);
        }
    }
}
