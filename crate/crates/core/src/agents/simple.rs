//! Context-free baselines: epsilon-greedy over per-arm running means, and
//! uniform random play.

use std::collections::HashMap;

use rand::Rng;

use crate::agents::{argmax, Agent};
use crate::error::{Error, Result};
use crate::rng;

fn arm_key(arm: &[f64]) -> Vec<u64> {
    arm.iter().map(|v| v.to_bits()).collect()
}

/// Epsilon-greedy keyed by the arm feature vector. Arms never observed have
/// mean 0. A uniform draw is taken every step whatever `epsilon` is, so
/// runs with different `epsilon` share the same random stream.
#[derive(Debug, Clone)]
pub struct EpsGreedy {
    epsilon: f64,
    stats: HashMap<Vec<u64>, (f64, u64)>,
    rng: rng::Rng,
}

impl EpsGreedy {
    pub fn new(epsilon: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::InvalidConfig(format!("epsilon must be in [0, 1], got {epsilon}")));
        }
        Ok(Self { epsilon, stats: HashMap::new(), rng: rng::stream(seed, "agent") })
    }

    pub fn mean(&self, arm: &[f64]) -> f64 {
        self.stats.get(&arm_key(arm)).map_or(0.0, |&(s, n)| s / n as f64)
    }
}

impl Agent for EpsGreedy {
    fn name(&self) -> &str {
        "eps_greedy"
    }

    fn select(&mut self, _context: &[f64], arms: &[Vec<f64>]) -> Result<usize> {
        if arms.is_empty() {
            return Err(Error::Empty("arm set"));
        }
        let u: f64 = self.rng.random();
        if u < self.epsilon {
            Ok(self.rng.random_range(0..arms.len()))
        } else {
            Ok(argmax(arms.iter().map(|a| self.mean(a))))
        }
    }

    fn observe(&mut self, _context: &[f64], arm: &[f64], reward: f64) -> Result<()> {
        let e = self.stats.entry(arm_key(arm)).or_insert((0.0, 0));
        e.0 += reward;
        e.1 += 1;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct UniformAgent {
    rng: rng::Rng,
}

impl UniformAgent {
    pub fn new(seed: u64) -> Self {
        Self { rng: rng::stream(seed, "agent") }
    }
}

impl Agent for UniformAgent {
    fn name(&self) -> &str {
        "uniform"
    }

    fn warm_start(&mut self, _data: &[crate::data::LoggedSample]) -> Result<()> {
        Ok(())
    }

    fn select(&mut self, _context: &[f64], arms: &[Vec<f64>]) -> Result<usize> {
        if arms.is_empty() {
            return Err(Error::Empty("arm set"));
        }
        Ok(self.rng.random_range(0..arms.len()))
    }

    fn observe(&mut self, _context: &[f64], _arm: &[f64], _reward: f64) -> Result<()> {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{one_hot, BernoulliArmsEnv, Environment};

    fn play(agent: &mut dyn Agent, env: &mut dyn Environment) -> f64 {
        let mut regret = 0.0;
        while let Some(s) = env.next_step() {
            let i = agent.select(&s.context, &s.arms).unwrap();
            let r = env.reward(&s, i);
            agent.observe(&s.context, &s.arms[i], r).unwrap();
            regret += s.best_mean() - s.means[i];
        }
        regret
    }

    #[test]
    fn full_exploration_is_uniform() {
        let mut a = EpsGreedy::new(1.0, 0).unwrap();
        let mut b = UniformAgent::new(0);
        let arms: Vec<Vec<f64>> = (0..3).map(|i| one_hot(i, 3)).collect();
        let mut counts = [0f64; 3];
        for _ in 0..9000 {
            counts[a.select(&[], &arms).unwrap()] += 1.0;
            b.select(&[], &arms).unwrap();
            a.observe(&[], &arms[0], 1.0).unwrap();
        }
        let chi2: f64 = counts.iter().map(|c| (c - 3000.0).powi(2) / 3000.0).sum();
        // 99th percentile with 2 degrees of freedom.
        assert!(chi2 < 9.21, "{counts:?}");
    }

    #[test]
    fn greedy_sticks_to_the_best_arm() {
        let mut a = EpsGreedy::new(0.0, 1).unwrap();
        let arms: Vec<Vec<f64>> = (0..3).map(|i| one_hot(i, 3)).collect();
        a.observe(&[], &arms[2], 1.0).unwrap();
        a.observe(&[], &arms[0], 0.0).unwrap();
        for _ in 0..100 {
            assert_eq!(a.select(&[], &arms).unwrap(), 2);
        }
    }

    #[test]
    fn regret_rate_matches_exploration_share() {
        let mut a = EpsGreedy::new(0.1, 2).unwrap();
        let mut env = BernoulliArmsEnv::new(vec![0.9, 0.1], 10_000, 2).unwrap();
        let regret = play(&mut a, &mut env);
        // Random pulls hit the bad arm half the time: eps * 0.8 / 2 per step.
        let expect = 0.1 * 0.4 * 10_000.0;
        assert!((regret - expect).abs() < 0.2 * expect, "{regret}");
    }

    #[test]
    fn uniform_regret() {
        let mut a = UniformAgent::new(3);
        let mut env = BernoulliArmsEnv::new(vec![0.9, 0.1], 10_000, 3).unwrap();
        let regret = play(&mut a, &mut env);
        assert!((regret - 4000.0).abs() < 3.0 * 0.8 * 50.0, "{regret}");
    }

    #[test]
    fn bad_epsilon_rejected() {
        assert!(EpsGreedy::new(1.5, 0).is_err());
    }
}
