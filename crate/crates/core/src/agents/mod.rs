//! Bandit agents: the C3 agent and the baselines it is compared against.

pub mod c3;
pub mod linear;
pub mod simple;

use crate::data::LoggedSample;
use crate::error::Result;

pub use c3::{C3Agent, C3Config, Estimator, Eviction, EvictionMode, Selection};
pub use linear::{LinTs, LinUcb};
pub use simple::{EpsGreedy, UniformAgent};

pub trait Agent {
    fn name(&self) -> &str;

    /// Offline data seen before the first step. The default feeds every row
    /// through `observe`.
    fn warm_start(&mut self, data: &[LoggedSample]) -> Result<()> {
        for s in data {
            self.observe(&s.context, &s.arm, s.reward)?;
        }
        Ok(())
    }

    /// Choose one of `arms` (non-empty) for `context`.
    fn select(&mut self, context: &[f64], arms: &[Vec<f64>]) -> Result<usize>;

    /// Feedback for the arm just played.
    fn observe(&mut self, context: &[f64], arm: &[f64], reward: f64) -> Result<()>;
}

/// Index of the largest value, lowest index on ties. NaN never wins unless
/// everything is NaN; an empty input gives 0.
pub fn argmax<I: IntoIterator<Item = f64>>(xs: I) -> usize {
    let mut best = 0;
    let mut best_v = f64::NAN;
    for (i, v) in xs.into_iter().enumerate() {
        if (best_v.is_nan() && !v.is_nan()) || v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}
