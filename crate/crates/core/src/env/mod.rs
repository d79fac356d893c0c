//! Bandit environments.
//!
//! An environment hands out steps (context, valid arms, the true mean reward
//! of each arm) and samples rewards for the chosen arm. Context draws and
//! reward draws use separate generators, so the sequence of contexts does
//! not depend on which agent is playing.

pub mod coupled;
pub mod coupling;
pub mod drift;
pub mod tabular;

use crate::data::LoggedSample;

pub use coupled::{coupled_episode, sample_correlated_mu, CoupledArmSpec, CoupledBandit};
pub use coupling::{coupling_rho, js_divergence_bernoulli, smoothed_rate};
pub use drift::{DriftSchedule, DriftSegment, DriftingNewsEnv, DriftingNewsSpec};
pub use tabular::{BernoulliArmsEnv, TabularBanditEnv, TabularBanditTask, TabularDataset, TabularStep};

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    /// Position in the stream, from 0.
    pub index: usize,
    pub context: Vec<f64>,
    pub arms: Vec<Vec<f64>>,
    /// Expected reward of each valid arm at this step.
    pub means: Vec<f64>,
    /// Whether the step counts toward evaluation regret.
    pub eval: bool,
    pub interval: i64,
}

impl Step {
    pub fn best_mean(&self) -> f64 {
        self.means.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

pub trait Environment {
    fn context_dim(&self) -> usize;
    fn arm_dim(&self) -> usize;
    /// Next step, or `None` once the stream is exhausted.
    fn next_step(&mut self) -> Option<Step>;
    /// Draw the reward of `arm` at `step`.
    fn reward(&mut self, step: &Step, arm: usize) -> f64;
    /// Historical data handed to every agent before the online phase.
    fn warm_start_data(&mut self) -> Vec<LoggedSample> {
        Vec::new()
    }
    /// Number of time intervals in the warm-start data.
    fn time_intervals(&self) -> usize {
        1
    }
}

pub fn one_hot(k: usize, n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[k] = 1.0;
    v
}
