use crate::error::{QngError, Result};
use crate::hermite::HermiteAnchor;

/// Parametric low-rate approximation of the threshold at parameter `t`
/// (`t = 1 - V` of the optimal Gaussian state). Returns `(r_n, r_n1)`.
pub fn threshold_param_approx(n: usize, t: f64) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(QngError::domain("criterion order must be >= 1"));
    }
    if !(t > 0.0 && t.is_finite()) {
        return Err(QngError::domain(format!(
            "parameter t must be positive, got {t}"
        )));
    }
    let anchor = HermiteAnchor::new(n)?;
    Ok(param_approx_at(&anchor, t))
}

pub(crate) fn param_approx_at(anchor: &HermiteAnchor, t: f64) -> (f64, f64) {
    let n = anchor.order as f64;
    let x2 = anchor.x_star * anchor.x_star;
    let base = anchor.h_n_sq / (4.0 * (n + 1.0)).powi(anchor.order as i32);
    let r_n = 0.5 * base * t.powi(anchor.order as i32) * (2.0 + n * t);
    let bracket = 12.0 * (1.0 + n) + 6.0 * (1.0 + n) * (2.0 + n) * t - x2 * (2.0 + 3.0 * n) * t;
    let r_n1 = bracket * base / (3.0 * 32.0) * t.powi(anchor.order as i32 + 2);
    (r_n, r_n1)
}

/// Closed-form low-rate threshold:
/// `r_n = [H_n(x)^4 (r_n1 / (2 (n+1)^3))^n]^(1/(n+2))`.
pub fn threshold_closed_form(n: usize, r_n1: f64) -> Result<f64> {
    if n == 0 {
        return Err(QngError::domain("criterion order must be >= 1"));
    }
    if !(r_n1 >= 0.0 && r_n1.is_finite()) {
        return Err(QngError::domain(format!(
            "r_n1 must be non-negative, got {r_n1}"
        )));
    }
    let anchor = HermiteAnchor::new(n)?;
    Ok(closed_form_at(&anchor, r_n1))
}

pub(crate) fn closed_form_at(anchor: &HermiteAnchor, r_n1: f64) -> f64 {
    if r_n1 == 0.0 {
        return 0.0;
    }
    let n = anchor.order as f64;
    let ln = anchor.h_n_4().ln() + n * (r_n1.ln() - (2.0 * (n + 1.0).powi(3)).ln());
    (ln / (n + 2.0)).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_order_closed_form_is_a_cube_root() {
        for &r in &[1e-12, 1e-6, 1e-3] {
            let v = threshold_closed_form(1, r).unwrap();
            assert!((v - (r / 4.0).cbrt()).abs() < 1e-13 * v);
        }
    }

    #[test]
    fn second_order_closed_form() {
        let v = threshold_closed_form(2, 1e-12).unwrap();
        let expected = (256.0 * (1e-12f64 / 54.0).powi(2)).powf(0.25);
        assert!((v - expected).abs() < 1e-12 * expected);
        assert_eq!(threshold_closed_form(2, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn parametric_form_written_out_for_first_order() {
        // n = 1: x^2 = 1/2, H_1^2 = 2, [4(n+1)]^n = 8
        let t: f64 = 0.1;
        let (rn, rn1) = threshold_param_approx(1, t).unwrap();
        let rn_direct = 0.5 * (2.0 / 8.0) * t * (2.0 + t);
        let rn1_direct = (24.0 + 36.0 * t - 0.5 * 5.0 * t) * 2.0 / (96.0 * 8.0) * t.powi(3);
        assert!((rn - rn_direct).abs() < 1e-15 * rn_direct);
        assert!((rn1 - rn1_direct).abs() < 1e-15 * rn1_direct);
    }

    #[test]
    fn parametric_form_reduces_to_closed_form_at_small_t() {
        for n in 1..=9 {
            let t = 1e-7;
            let (rn, rn1) = threshold_param_approx(n, t).unwrap();
            let cf = threshold_closed_form(n, rn1).unwrap();
            assert!((rn / cf - 1.0).abs() < 1e-5, "n={n}: {rn:e} vs {cf:e}");
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(threshold_param_approx(0, 0.1).is_err());
        assert!(threshold_param_approx(2, 0.0).is_err());
        assert!(threshold_closed_form(1, -1.0).is_err());
    }
}
