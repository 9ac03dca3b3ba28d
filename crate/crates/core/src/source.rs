//! Heralded single-photon sources merged in time, at distribution level and
//! as an event sampler.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Binomial;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detector::{attenuate, click_probabilities, merge, ClickPair, DetectorConfig};
use crate::error::{QngError, Result};
use crate::gaussian::PhotonDistribution;
use crate::threshold::ThresholdCurve;
use crate::witness::{classify, qng_depth, CountRecord, Depth, Verdict};

/// Trials simulated per random stream.
pub const SHARD_TRIALS: u64 = 1 << 16;

/// Photon-number statistics of one heralded time window, truncated at three
/// photons.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeraldedSourceModel {
    pub p0: f64,
    pub p1: f64,
    pub p2: f64,
    pub p3: f64,
}

impl HeraldedSourceModel {
    /// `p3 = None` continues the multiphoton terms geometrically,
    /// `p3 = p2^2 / p1`.
    pub fn new(p1: f64, p2: f64, p3: Option<f64>) -> Result<Self> {
        let p3 = p3.unwrap_or(if p1 > 0.0 { p2 * p2 / p1 } else { 0.0 });
        for (name, p) in [("p1", p1), ("p2", p2), ("p3", p3)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(QngError::domain(format!(
                    "{name} = {p} is not a probability"
                )));
            }
        }
        let p0 = 1.0 - p1 - p2 - p3;
        if p0 < -1e-12 {
            return Err(QngError::domain(format!(
                "p1 + p2 + p3 = {} exceeds 1",
                p1 + p2 + p3
            )));
        }
        Ok(HeraldedSourceModel {
            p0: p0.max(0.0),
            p1,
            p2,
            p3,
        })
    }

    /// An ideal single-photon source.
    pub fn ideal() -> Self {
        HeraldedSourceModel {
            p0: 0.0,
            p1: 1.0,
            p2: 0.0,
            p3: 0.0,
        }
    }

    /// Human-readable cautions about the parameters.
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.p2 > 0.1 * self.p1 {
            w.push(format!(
                "p2 = {} is not small against p1 = {}; multiphoton noise dominates",
                self.p2, self.p1
            ));
        }
        if self.p3 > self.p2 && self.p2 > 0.0 {
            w.push(format!("p3 = {} exceeds p2 = {}", self.p3, self.p2));
        }
        w
    }

    pub fn window(&self) -> PhotonDistribution {
        let mut probs = vec![self.p0, self.p1, self.p2, self.p3];
        while probs.len() > 1 && probs[probs.len() - 1] == 0.0 {
            probs.pop();
        }
        let total: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|p| *p /= total);
        PhotonDistribution::new(probs, 0.0).expect("normalised window distribution")
    }
}

/// `merge_count` heralded windows joined into one detection unit and sent
/// to a balanced detector. The criterion order is `channels - 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentModel {
    pub source: HeraldedSourceModel,
    pub merge_count: usize,
    pub detector: DetectorConfig,
    pub trials: u64,
}

impl ExperimentModel {
    /// The certification setup: `n` windows on `n + 1` channels.
    pub fn certification(
        source: HeraldedSourceModel,
        n: usize,
        efficiency: f64,
        trials: u64,
    ) -> Result<Self> {
        let m = ExperimentModel {
            source,
            merge_count: n,
            detector: DetectorConfig::for_order(n, efficiency)?,
            trials,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn order(&self) -> usize {
        self.detector.channels - 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.merge_count == 0 {
            return Err(QngError::domain("at least one time window must be merged"));
        }
        if self.detector.channels < 2 {
            return Err(QngError::domain(
                "the criterion needs at least two channels",
            ));
        }
        if !(0.0..=1.0).contains(&self.detector.efficiency) {
            return Err(QngError::domain(format!(
                "efficiency must lie in [0, 1], got {}",
                self.detector.efficiency
            )));
        }
        Ok(())
    }
}

/// Photon statistics of the merged windows before loss.
pub fn merged_state_lossless(model: &ExperimentModel) -> Result<PhotonDistribution> {
    model.validate()?;
    let window = model.source.window();
    Ok(merge(&vec![window; model.merge_count]))
}

/// Photon statistics reaching the detector: the `merge_count`-fold
/// convolution of the window distribution followed by binomial loss.
pub fn merged_state(model: &ExperimentModel) -> Result<PhotonDistribution> {
    attenuate(&merged_state_lossless(model)?, model.detector.efficiency)
}

/// Analytic click probabilities of the model.
pub fn model_clicks(model: &ExperimentModel) -> Result<ClickPair> {
    click_probabilities(
        &merged_state(model)?,
        model.order(),
        model.detector.channels,
    )
}

/// Event-level simulation: photons are drawn from the lossless merged
/// distribution, thinned by the efficiency and sent to uniformly random
/// channels; a channel clicks on one or more photons. Channels `0..n` form
/// the designated subset; subset `j` omits channel `n - j`.
pub fn simulate_counts(model: &ExperimentModel, seed: u64) -> Result<CountRecord> {
    model.validate()?;
    if model.trials == 0 {
        return Err(QngError::domain("simulation needs at least one trial"));
    }
    let channels = model.detector.channels;
    if channels > 64 {
        return Err(QngError::Unsupported(format!(
            "the event sampler handles at most 64 channels, got {channels}"
        )));
    }
    let n = model.order();
    let lossless = merged_state_lossless(model)?;
    let photons = WeightedIndex::new(lossless.probs())
        .map_err(|e| QngError::domain(format!("invalid photon distribution: {e}")))?;
    let efficiency = model.detector.efficiency;
    let all_n1: u64 = (1u64 << (n + 1)) - 1;

    let shards = model.trials.div_ceil(SHARD_TRIALS);
    let tallies: Vec<Vec<u64>> = (0..shards)
        .into_par_iter()
        .map(|shard| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(shard);
            let len = SHARD_TRIALS.min(model.trials - shard * SHARD_TRIALS);
            // [count_n1, subset_0, .., subset_n]
            let mut t = vec![0u64; n + 2];
            for _ in 0..len {
                let m = photons.sample(&mut rng) as u64;
                let survivors = if m == 0 {
                    0
                } else {
                    Binomial::new(m, efficiency)
                        .expect("efficiency in [0, 1]")
                        .sample(&mut rng)
                };
                let mut clicked = 0u64;
                for _ in 0..survivors {
                    clicked |= 1 << rng.random_range(0..channels);
                }
                let first = clicked & all_n1;
                if first == all_n1 {
                    t[0] += 1;
                }
                for (j, c) in t[1..].iter_mut().enumerate() {
                    let want = all_n1 & !(1 << (n - j));
                    if first & want == want {
                        *c += 1;
                    }
                }
            }
            t
        })
        .collect();
    let mut total = vec![0u64; n + 2];
    for t in tallies {
        total.iter_mut().zip(t).for_each(|(a, b)| *a += b);
    }
    let rec = CountRecord {
        order: n,
        trials: model.trials,
        count_n: total[1],
        count_n1: total[0],
        subsets: Some(total[1..].to_vec()),
    };
    rec.validate()?;
    Ok(rec)
}

/// One tile of the state-by-criterion table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteCell {
    /// Number of merged heralded windows.
    pub state: usize,
    /// Criterion order.
    pub order: usize,
    pub diagonal: bool,
    pub pair: ClickPair,
    /// Classification of the record with the expected counts at the
    /// suite's trial number; `None` when the curve cannot decide.
    pub verdict: Option<Verdict>,
    /// Depth of the model state itself, free of counting noise.
    pub model_depth: Option<Depth>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// The state-by-criterion table for merged heralded sources.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteTable {
    pub source: HeraldedSourceModel,
    pub efficiency: f64,
    pub trials: u64,
    pub cells: Vec<SuiteCell>,
}

impl SuiteTable {
    pub fn cell(&self, state: usize, order: usize) -> Option<&SuiteCell> {
        self.cells
            .iter()
            .find(|c| c.state == state && c.order == order)
    }
}

/// Classifies every (state, order) pair with `state` in `states` and
/// `order` among the orders of `curves`.
pub fn reproduce_experiment_suite(
    source: &HeraldedSourceModel,
    efficiency: f64,
    states: std::ops::RangeInclusive<usize>,
    trials: u64,
    curves: &[ThresholdCurve],
) -> Result<SuiteTable> {
    if trials == 0 {
        return Err(QngError::domain("the suite needs at least one trial"));
    }
    let jobs: Vec<(usize, &ThresholdCurve)> = states
        .flat_map(|s| curves.iter().map(move |c| (s, c)))
        .collect();
    let cells = jobs
        .into_par_iter()
        .map(|(s, curve)| suite_cell(source, efficiency, s, curve, trials))
        .collect::<Result<Vec<_>>>()?;
    Ok(SuiteTable {
        source: *source,
        efficiency,
        trials,
        cells,
    })
}

fn suite_cell(
    source: &HeraldedSourceModel,
    efficiency: f64,
    state: usize,
    curve: &ThresholdCurve,
    trials: u64,
) -> Result<SuiteCell> {
    let order = curve.order();
    let model = ExperimentModel {
        source: *source,
        merge_count: state,
        detector: DetectorConfig::for_order(order, efficiency)?,
        trials,
    };
    let dist = merged_state(&model)?;
    let pair = click_probabilities(&dist, order, order + 1)?;
    let expected = |r: f64| (r * trials as f64).round() as u64;
    let rec = CountRecord::new(order, trials, expected(pair.r_n), expected(pair.r_n1))?;
    let mut note = None;
    let verdict = match classify(&rec, curve) {
        Ok(v) => Some(v),
        Err(e @ QngError::OutOfRange { .. }) => {
            note = Some(e.to_string());
            None
        }
        Err(e) => return Err(e),
    };
    let model_depth = match qng_depth(&dist, order, order + 1, curve) {
        Ok(d) => Some(d),
        Err(e @ QngError::OutOfRange { .. }) => {
            note.get_or_insert(e.to_string());
            None
        }
        Err(e) => return Err(e),
    };
    Ok(SuiteCell {
        state,
        order,
        diagonal: state == order,
        pair,
        verdict,
        model_depth,
        note,
    })
}
