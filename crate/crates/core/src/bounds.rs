//! Tail bounds on cumulative attention (unit and real-valued polarity) and
//! a Monte Carlo estimator to check them against.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Monte Carlo trials are split into this many independently seeded
/// shards, so the estimate does not depend on the thread count.
const SHARDS: u64 = 16;

/// `min(1, 2·exp(−δ²E / (2 + δ)))` for a sum of independent Bernoullis with
/// mean `E`.
pub fn chernoff_bound(expected: f64, delta: f64) -> Result<f64> {
    if !(expected > 0.0 && expected.is_finite()) || !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::Domain(format!(
            "chernoff bound needs E > 0 and δ > 0, got E={expected}, δ={delta}"
        )));
    }
    Ok((2.0 * (-delta * delta * expected / (2.0 + delta)).exp()).min(1.0))
}

/// `min(1, 2·exp(−2δ² / Σ(b_t − a_t)²))` for independent terms with
/// `X_t ∈ [a_t, b_t]`.
pub fn hoeffding_bound(ranges: &[(f64, f64)], delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::Domain(format!("hoeffding bound needs δ > 0, got {delta}")));
    }
    if let Some(&(a, b)) = ranges.iter().find(|(a, b)| !(a.is_finite() && b.is_finite() && a <= b)) {
        return Err(Error::Domain(format!("invalid range [{a}, {b}]")));
    }
    let spread: f64 = ranges.iter().map(|(a, b)| (b - a) * (b - a)).sum();
    if spread <= 0.0 {
        return Err(Error::Domain("every range is degenerate".into()));
    }
    Ok((2.0 * (-2.0 * delta * delta / spread).exp()).min(1.0))
}

/// Independent Bernoulli draws with a polarity range per draw.
#[derive(Debug, Clone, PartialEq)]
pub struct BernoulliStream {
    probabilities: Vec<f64>,
    ranges: Vec<(f64, f64)>,
}

impl BernoulliStream {
    pub fn new(probabilities: Vec<f64>, ranges: Vec<(f64, f64)>) -> Result<Self> {
        if probabilities.len() != ranges.len() {
            return Err(Error::LengthMismatch {
                expected: probabilities.len(),
                got: ranges.len(),
            });
        }
        if let Some(p) = probabilities.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::Domain(format!("probability {p} outside [0, 1]")));
        }
        if let Some(&(a, b)) = ranges.iter().find(|(a, b)| !(a.is_finite() && b.is_finite() && a <= b)) {
            return Err(Error::Domain(format!("invalid range [{a}, {b}]")));
        }
        Ok(BernoulliStream { probabilities, ranges })
    }

    /// Every draw with polarity range `[0, 1]`.
    pub fn unit(probabilities: Vec<f64>) -> Result<Self> {
        let ranges = vec![(0.0, 1.0); probabilities.len()];
        BernoulliStream::new(probabilities, ranges)
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn ranges(&self) -> &[(f64, f64)] {
        &self.ranges
    }

    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }

    /// `Σ_t η_t p_t`.
    pub fn expected(&self, polarities: &[f64]) -> f64 {
        self.probabilities.iter().zip(polarities).map(|(p, e)| p * e).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TailMode {
    /// Deviation of at least `δ·E[S]`; unit polarities only.
    Relative,
    /// Deviation of at least `δ`.
    Absolute,
}

/// Fraction of `trials` simulated sums `S = Σ η_t X_t` with
/// `|S − E[S]| ≥ threshold`. A zero deviation never counts.
pub fn monte_carlo_tail(
    stream: &BernoulliStream,
    polarities: &[f64],
    delta: f64,
    mode: TailMode,
    trials: u64,
    seed: u64,
) -> Result<f64> {
    if polarities.len() != stream.len() {
        return Err(Error::LengthMismatch {
            expected: stream.len(),
            got: polarities.len(),
        });
    }
    if trials == 0 {
        return Err(Error::Domain("need at least one trial".into()));
    }
    if !(delta > 0.0) {
        return Err(Error::Domain(format!("δ must be positive, got {delta}")));
    }
    if mode == TailMode::Relative && polarities.iter().any(|&e| e != 1.0) {
        return Err(Error::ModeMismatch);
    }
    // each draw takes values in {0, η}, which must sit inside its range
    for (&eta, &(a, b)) in polarities.iter().zip(&stream.ranges) {
        if eta.min(0.0) < a || eta.max(0.0) > b {
            return Err(Error::Domain(format!("values {{0, {eta}}} not inside range [{a}, {b}]")));
        }
    }
    let expected = stream.expected(polarities);
    let threshold = match mode {
        TailMode::Relative => delta * expected,
        TailMode::Absolute => delta,
    };
    let slack = 1e-12 * threshold.abs().max(1.0);

    let hits: u64 = (0..SHARDS)
        .into_par_iter()
        .map(|shard| {
            let share = trials / SHARDS + u64::from(shard < trials % SHARDS);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(shard);
            let mut hits = 0u64;
            for _ in 0..share {
                let s: f64 = stream
                    .probabilities
                    .iter()
                    .zip(polarities)
                    .map(|(&p, &eta)| if rng.random_bool(p) { eta } else { 0.0 })
                    .sum();
                let dev = (s - expected).abs();
                if dev > 0.0 && dev >= threshold - slack {
                    hits += 1;
                }
            }
            hits
        })
        .sum();
    Ok(hits as f64 / trials as f64)
}

/// Binomial standard error of an estimated probability.
pub fn binomial_se(p: f64, trials: u64) -> f64 {
    (p * (1.0 - p) / trials as f64).sqrt()
}
