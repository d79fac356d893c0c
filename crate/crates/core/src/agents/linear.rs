//! Linear baselines over the joint feature `context ++ arm`: LinUCB and
//! linear Thompson sampling with a ridge-regularized design matrix.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand_distr::{Distribution, StandardNormal};

use crate::agents::{argmax, Agent};
use crate::data::joint_input;
use crate::error::{Error, Result};
use crate::rng;

/// Ridge regression state: `A = lambda I + sum x x^T`, `b = sum r x`.
#[derive(Debug, Clone)]
pub struct RidgeState {
    a: DMatrix<f64>,
    b: DVector<f64>,
}

impl RidgeState {
    pub fn new(dim: usize, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(Error::InvalidConfig(format!("ridge lambda must be positive, got {lambda}")));
        }
        Ok(Self { a: DMatrix::identity(dim, dim) * lambda, b: DVector::zeros(dim) })
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn response(&self) -> &DVector<f64> {
        &self.b
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: x.len() });
        }
        Ok(())
    }

    pub fn update(&mut self, x: &[f64], r: f64) -> Result<()> {
        self.check(x)?;
        let x = DVector::from_column_slice(x);
        self.a.ger(1.0, &x, &x, 1.0);
        self.b.axpy(r, &x, 1.0);
        Ok(())
    }

    fn factor(&self) -> Cholesky<f64, Dyn> {
        // A is lambda I plus a sum of outer products: symmetric positive definite.
        Cholesky::new(self.a.clone()).expect("ridge design matrix is positive definite")
    }

    /// Ridge estimate `A^-1 b`.
    pub fn theta(&self) -> DVector<f64> {
        self.factor().solve(&self.b)
    }
}

#[derive(Debug, Clone)]
pub struct LinUcb {
    state: RidgeState,
    alpha: f64,
}

impl LinUcb {
    pub const DEFAULT_ALPHA: f64 = 1.96;

    pub fn new(dim: usize, alpha: f64, lambda: f64) -> Result<Self> {
        Ok(Self { state: RidgeState::new(dim, lambda)?, alpha })
    }

    pub fn state(&self) -> &RidgeState {
        &self.state
    }

    /// `theta^T x + alpha sqrt(x^T A^-1 x)` for every candidate feature.
    pub fn scores(&self, features: &[Vec<f64>]) -> Result<Vec<f64>> {
        let chol = self.state.factor();
        let theta = chol.solve(&self.state.b);
        features
            .iter()
            .map(|x| {
                self.state.check(x)?;
                let x = DVector::from_column_slice(x);
                let mean = theta.dot(&x);
                // x^T A^-1 x = |L^-1 x|^2
                let z = chol.l_dirty().solve_lower_triangular(&x).expect("diagonal is positive");
                Ok(mean + self.alpha * z.norm())
            })
            .collect()
    }
}

impl Agent for LinUcb {
    fn name(&self) -> &str {
        "linucb"
    }

    fn select(&mut self, context: &[f64], arms: &[Vec<f64>]) -> Result<usize> {
        if arms.is_empty() {
            return Err(Error::Empty("arm set"));
        }
        let xs: Vec<Vec<f64>> = arms.iter().map(|a| joint_input(context, a)).collect();
        Ok(argmax(self.scores(&xs)?))
    }

    fn observe(&mut self, context: &[f64], arm: &[f64], reward: f64) -> Result<()> {
        self.state.update(&joint_input(context, arm), reward)
    }
}

/// Posterior scale `v = R sqrt(24 / eps * d * ln(1 / delta))`.
pub fn lints_scale(r: f64, eps: f64, delta: f64, dim: usize) -> f64 {
    r * (24.0 / eps * dim as f64 * (1.0 / delta).ln()).sqrt()
}

#[derive(Debug, Clone)]
pub struct LinTs {
    state: RidgeState,
    v: f64,
    rng: rng::Rng,
}

impl LinTs {
    pub fn new(dim: usize, v: f64, lambda: f64, seed: u64) -> Result<Self> {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::InvalidConfig(format!("posterior scale must be non-negative, got {v}")));
        }
        Ok(Self { state: RidgeState::new(dim, lambda)?, v, rng: rng::stream(seed, "agent") })
    }

    /// Default scale from `R = 0.01`, `eps = 0.5`, `delta = 0.5`.
    pub fn with_default_scale(dim: usize, seed: u64) -> Result<Self> {
        Self::new(dim, lints_scale(0.01, 0.5, 0.5, dim), 1.0, seed)
    }

    pub fn state(&self) -> &RidgeState {
        &self.state
    }

    /// Draw `theta ~ N(A^-1 b, v^2 A^-1)` as `A^-1 b + v L^-T z`.
    pub fn sample_theta(&mut self) -> DVector<f64> {
        let chol = self.state.factor();
        let mean = chol.solve(&self.state.b);
        let d = self.state.dim();
        let z = DVector::from_iterator(d, (0..d).map(|_| StandardNormal.sample(&mut self.rng)));
        let noise = chol
            .l_dirty()
            .tr_solve_lower_triangular(&z)
            .expect("diagonal is positive");
        mean + noise * self.v
    }
}

impl Agent for LinTs {
    fn name(&self) -> &str {
        "lints"
    }

    fn select(&mut self, context: &[f64], arms: &[Vec<f64>]) -> Result<usize> {
        if arms.is_empty() {
            return Err(Error::Empty("arm set"));
        }
        let theta = self.sample_theta();
        let mut scores = Vec::with_capacity(arms.len());
        for a in arms {
            let x = joint_input(context, a);
            self.state.check(&x)?;
            scores.push(theta.dot(&DVector::from_column_slice(&x)));
        }
        Ok(argmax(scores))
    }

    fn observe(&mut self, context: &[f64], arm: &[f64], reward: f64) -> Result<()> {
        self.state.update(&joint_input(context, arm), reward)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_data_zero_alpha_ties_low() {
        let mut agent = LinUcb::new(3, 0.0, 1.0).unwrap();
        let arms = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
        assert_eq!(agent.scores(&arms).unwrap(), vec![0.0; 3]);
        assert_eq!(agent.select(&[], &arms).unwrap(), 0);
    }

    #[test]
    fn ridge_estimate_closed_form() {
        let mut agent = LinUcb::new(1, 1.96, 1.0).unwrap();
        for _ in 0..100 {
            agent.observe(&[], &[1.0], 1.0).unwrap();
        }
        // (1 + 100)^-1 * 100
        assert!((agent.state().theta()[0] - 100.0 / 101.0).abs() < 1e-12);
    }

    #[test]
    fn ridge_matches_normal_equations() {
        let mut s = RidgeState::new(3, 1.0).unwrap();
        let xs = [[1.0, 2.0, 0.5], [0.0, -1.0, 1.0], [2.0, 0.0, 0.0], [1.0, 1.0, 1.0]];
        let rs = [1.0, 0.0, 1.0, 1.0];
        for (x, r) in xs.iter().zip(rs) {
            s.update(x, r).unwrap();
        }
        // Dense oracle: build A and b by hand, solve with LU.
        let mut a = DMatrix::<f64>::identity(3, 3);
        let mut b = DVector::<f64>::zeros(3);
        for (x, r) in xs.iter().zip(rs) {
            for i in 0..3 {
                b[i] += r * x[i];
                for j in 0..3 {
                    a[(i, j)] += x[i] * x[j];
                }
            }
        }
        let oracle = a.lu().solve(&b).unwrap();
        assert!((s.theta() - oracle).norm() < 1e-12);
    }

    #[test]
    fn ucb_bonus_shrinks_with_repeats() {
        let mut agent = LinUcb::new(2, 1.0, 1.0).unwrap();
        let x = vec![0.6, 0.8];
        let mut last = f64::INFINITY;
        for _ in 0..20 {
            let bonus = agent.scores(std::slice::from_ref(&x)).unwrap()[0] - agent.state().theta().dot(&DVector::from_column_slice(&x));
            assert!(bonus < last);
            last = bonus;
            agent.observe(&[], &x, 0.0).unwrap();
        }
    }

    #[test]
    fn dimension_checked() {
        let mut agent = LinUcb::new(2, 1.0, 1.0).unwrap();
        assert!(agent.observe(&[1.0], &[1.0, 2.0], 1.0).is_err());
        assert!(agent.select(&[], &[vec![1.0]]).is_err());
        assert!(RidgeState::new(2, 0.0).is_err());
    }

    #[test]
    fn lints_scale_value() {
        // 0.01 * sqrt(48 * 2 * ln 2)
        let v = lints_scale(0.01, 0.5, 0.5, 2);
        assert!((v - 0.01 * (96.0 * std::f64::consts::LN_2).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn lints_sample_moments() {
        let mut agent = LinTs::new(2, 0.5, 1.0, 3).unwrap();
        let xs = [[1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.5]];
        for (i, x) in xs.iter().enumerate() {
            agent.observe(&[], x, f64::from(i % 2 == 0)).unwrap();
        }
        let a = agent.state().design().clone();
        let mean = agent.state().theta();
        let cov = a.try_inverse().unwrap() * 0.25;
        let n = 20_000;
        let draws: Vec<DVector<f64>> = (0..n).map(|_| agent.sample_theta()).collect();
        let m = draws.iter().fold(DVector::zeros(2), |acc, d| acc + d) / n as f64;
        for i in 0..2 {
            assert!((m[i] - mean[i]).abs() < 4.0 * (cov[(i, i)] / n as f64).sqrt());
        }
        let mut c = DMatrix::<f64>::zeros(2, 2);
        for d in &draws {
            let e = d - &m;
            c += &e * e.transpose();
        }
        c /= (n - 1) as f64;
        assert!((c - cov).abs().max() < 0.05 * 0.25);
    }

    #[test]
    fn lints_is_reproducible() {
        let run = |seed| {
            let mut agent = LinTs::with_default_scale(2, seed).unwrap();
            let arms = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
            (0..50)
                .map(|t| {
                    let i = agent.select(&[], &arms).unwrap();
                    agent.observe(&[], &arms[i], f64::from(t % 3 == 0)).unwrap();
                    i
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(run(1), run(1));
    }
}
