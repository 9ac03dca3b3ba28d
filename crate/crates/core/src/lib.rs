//! Quantum non-Gaussianity witnesses for multichannel click detectors.
//!
//! Light is split evenly over n + 1 binary single-photon detectors. The
//! probability `r_n` that n designated channels click together and the
//! probability `r_n1` that all n + 1 click are compared against the largest
//! `r_n` any mixture of Gaussian states can reach at that `r_n1`. Points above
//! that threshold certify quantum non-Gaussian light.
//!
//! Modules, bottom up:
//!
//! - [`gaussian`]: closed-form statistics of squeezed coherent modes.
//! - [`detector`]: transfer matrix, click probabilities, loss and merging.
//! - [`threshold`]: exact and approximate threshold curves.
//! - [`montecarlo`]: randomized search for Gaussian counterexamples.
//! - [`witness`]: verdicts with Bayesian uncertainty, attenuation paths,
//!   loss robustness in dB.
//! - [`source`]: merged heralded single-photon sources and an event sampler.
//! - [`cli`]: the `qng` command-line front end.

pub mod cli;
pub mod detector;
pub mod error;
pub mod gaussian;
pub mod hermite;
pub mod io;
pub mod montecarlo;
pub mod numeric;
pub mod source;
pub mod threshold;
pub mod witness;

pub use detector::{ClickPair, DetectorConfig};
pub use error::{QngError, Result};
pub use gaussian::{GaussianModeParams, MultimodeGaussianState, PhotonDistribution};
pub use threshold::ThresholdCurve;
