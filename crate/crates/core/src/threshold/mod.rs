//! Gaussian threshold curves for the order-n click criterion.
//!
//! For a balanced detector with n + 1 channels, the largest success
//! probability `r_n` that any mixture of Gaussian states reaches at a given
//! error probability `r_n1` is attained by a single pure mode with the
//! squeezing axis along the displacement. [`threshold_exact`] traces that
//! boundary numerically; [`threshold_param_approx`] and
//! [`threshold_closed_form`] are the low-rate approximations.

mod approx;
mod curve;
mod solver;

pub use approx::{threshold_closed_form, threshold_param_approx};
pub use curve::{CurveQuery, CurveSample, Regime, ThresholdCurve, ASYMPTOTIC_SAFETY_FACTOR};
pub use solver::{
    default_grid, threshold_exact, threshold_exact_with, BoundaryPoint, BoundarySolver,
    GaussianRates, SolverConfig,
};

pub use crate::hermite::{hermite_eval, HermiteAnchor};

use serde::{Deserialize, Serialize};

use crate::detector::ClickPair;
use crate::error::Result;

/// Outcome of testing one click pair against a threshold curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FunctionalVerdict {
    Qng,
    NotQng,
}

/// Tests whether `pair` lies strictly above `curve`.
pub fn functional_check(
    pair: &ClickPair,
    curve: &ThresholdCurve,
) -> Result<(FunctionalVerdict, Regime)> {
    curve.check(pair)
}
