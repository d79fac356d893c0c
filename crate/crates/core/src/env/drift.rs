//! Drifting click-rate environment.
//!
//! Users come in a few types (one-hot context). Each step offers a handful
//! of articles, each with a category (one-hot) and a quality score. Base
//! click rates depend on (user type, category) plus a quality term. A drift
//! schedule then raises the boosted category's click rate (a miss becomes
//! a click with probability `p`) and lowers every other category's (a click
//! becomes a miss with probability `q`).

use rand::Rng;

use crate::data::LoggedSample;
use crate::env::{one_hot, Environment, Step};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftSegment {
    /// Half-open step range `[start, end)`.
    pub start: usize,
    pub end: usize,
    pub boosted: usize,
    pub p: f64,
    pub q: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftSchedule {
    segments: Vec<DriftSegment>,
}

impl DriftSchedule {
    pub fn new(segments: Vec<DriftSegment>) -> Result<Self> {
        for s in &segments {
            if !(0.0..=1.0).contains(&s.p) || !(0.0..=1.0).contains(&s.q) {
                return Err(Error::InvalidConfig(format!(
                    "drift probabilities must lie in [0, 1], got p = {}, q = {}",
                    s.p, s.q
                )));
            }
            if s.start >= s.end {
                return Err(Error::InvalidConfig(format!("empty drift range {}..{}", s.start, s.end)));
            }
        }
        if let Some(w) = segments.windows(2).find(|w| w[0].end != w[1].start) {
            return Err(Error::InvalidConfig(format!(
                "drift ranges must be contiguous: {}..{} then {}..{}",
                w[0].start, w[0].end, w[1].start, w[1].end
            )));
        }
        Ok(Self { segments })
    }

    /// Consecutive segments of `len` steps each starting at `start`, one per
    /// probability, with `p = q`.
    pub fn by_day(start: usize, len: usize, boosted: usize, probs: &[f64]) -> Result<Self> {
        Self::new(
            probs
                .iter()
                .enumerate()
                .map(|(d, &p)| DriftSegment {
                    start: start + d * len,
                    end: start + (d + 1) * len,
                    boosted,
                    p,
                    q: p,
                })
                .collect(),
        )
    }

    pub fn segments(&self) -> &[DriftSegment] {
        &self.segments
    }

    pub fn segment_at(&self, t: usize) -> Option<&DriftSegment> {
        self.segments.iter().find(|s| s.start <= t && t < s.end)
    }

    /// Apply the drift at time `t` to a base reward drawn for an arm of the
    /// given category. The identity outside the scheduled ranges.
    pub fn apply<R: Rng + ?Sized>(&self, t: usize, category: usize, base: f64, rng: &mut R) -> f64 {
        let Some(s) = self.segment_at(t) else {
            return base;
        };
        if category == s.boosted {
            if base == 0.0 && rng.random::<f64>() < s.p {
                return 1.0;
            }
        } else if base == 1.0 && rng.random::<f64>() < s.q {
            return 0.0;
        }
        base
    }

    /// Mean of the drifted reward given the base mean.
    pub fn effective_mean(&self, t: usize, category: usize, mu: f64) -> f64 {
        match self.segment_at(t) {
            None => mu,
            Some(s) if category == s.boosted => mu + (1.0 - mu) * s.p,
            Some(s) => mu * (1.0 - s.q),
        }
    }
}

/// Daily drift probabilities: the first three days make up the logged
/// history, the last four the online phase.
pub const DAILY_PROBS: [f64; 7] = [0.0, 0.0, 0.10, 0.15, 0.20, 0.25, 0.30];

#[derive(Debug, Clone, PartialEq)]
pub struct DriftingNewsSpec {
    /// Base click rate by user type (rows) and category (columns).
    pub base_rates: Vec<Vec<f64>>,
    /// Click-rate change per unit of quality above 0.5.
    pub quality_slope: f64,
    pub arms_per_step: usize,
    pub boosted: usize,
    pub history_days: usize,
    pub history_steps_per_day: usize,
    pub online_steps: usize,
    pub daily_probs: Vec<f64>,
}

impl Default for DriftingNewsSpec {
    fn default() -> Self {
        Self {
            base_rates: vec![
                vec![0.10, 0.45, 0.30, 0.25],
                vec![0.10, 0.25, 0.45, 0.30],
                vec![0.10, 0.30, 0.25, 0.45],
            ],
            quality_slope: 0.2,
            arms_per_step: 4,
            boosted: 0,
            history_days: 3,
            history_steps_per_day: 1000,
            online_steps: 1500,
            daily_probs: DAILY_PROBS.to_vec(),
        }
    }
}

impl DriftingNewsSpec {
    pub fn user_types(&self) -> usize {
        self.base_rates.len()
    }

    pub fn categories(&self) -> usize {
        self.base_rates.first().map_or(0, Vec::len)
    }

    fn validate(&self) -> Result<()> {
        let c = self.categories();
        if c == 0 || self.base_rates.iter().any(|r| r.len() != c) {
            return Err(Error::InvalidConfig("base rate table must be non-empty and rectangular".into()));
        }
        if self.boosted >= c {
            return Err(Error::InvalidConfig(format!("boosted category {} of {c}", self.boosted)));
        }
        if self.arms_per_step == 0 {
            return Err(Error::InvalidConfig("arms_per_step must be positive".into()));
        }
        let online_days = self.daily_probs.len().saturating_sub(self.history_days);
        if online_days == 0 || self.online_steps % online_days != 0 {
            return Err(Error::InvalidConfig(format!(
                "{} online steps cannot be split evenly over {online_days} days",
                self.online_steps
            )));
        }
        Ok(())
    }

    fn history_len(&self) -> usize {
        self.history_days * self.history_steps_per_day
    }

    /// Schedule in absolute time: history days first, then online days.
    pub fn schedule(&self) -> Result<DriftSchedule> {
        self.validate()?;
        let h = self.history_steps_per_day;
        let history = DriftSchedule::by_day(0, h, self.boosted, &self.daily_probs[..self.history_days])?;
        let online_days = self.daily_probs.len() - self.history_days;
        let len = self.online_steps / online_days;
        let online = DriftSchedule::by_day(self.history_len(), len, self.boosted, &self.daily_probs[self.history_days..])?;
        DriftSchedule::new(history.segments.into_iter().chain(online.segments).collect())
    }

    /// Interval label of absolute time `t`: the day index.
    pub fn day_of(&self, t: usize) -> i64 {
        if t < self.history_len() {
            (t / self.history_steps_per_day) as i64
        } else {
            let online_days = self.daily_probs.len() - self.history_days;
            let len = self.online_steps / online_days;
            (self.history_days + (t - self.history_len()) / len) as i64
        }
    }

    fn base_mean(&self, user: usize, category: usize, quality: f64) -> f64 {
        (self.base_rates[user][category] + self.quality_slope * (quality - 0.5)).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone)]
struct Offer {
    user: usize,
    categories: Vec<usize>,
    qualities: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct DriftingNewsEnv {
    spec: DriftingNewsSpec,
    schedule: DriftSchedule,
    step: usize,
    ctx_rng: rng::Rng,
    reward_rng: rng::Rng,
    history_rng: rng::Rng,
}

impl DriftingNewsEnv {
    pub fn new(spec: DriftingNewsSpec, seed: u64) -> Result<Self> {
        let schedule = spec.schedule()?;
        Ok(Self {
            spec,
            schedule,
            step: 0,
            ctx_rng: rng::stream(seed, "env/context"),
            reward_rng: rng::stream(seed, "env/reward"),
            history_rng: rng::stream(seed, "env/history"),
        })
    }

    pub fn spec(&self) -> &DriftingNewsSpec {
        &self.spec
    }

    pub fn schedule(&self) -> &DriftSchedule {
        &self.schedule
    }

    fn offer<R: Rng + ?Sized>(spec: &DriftingNewsSpec, rng: &mut R) -> Offer {
        let user = rng.random_range(0..spec.user_types());
        let categories = (0..spec.arms_per_step).map(|_| rng.random_range(0..spec.categories())).collect();
        let qualities = (0..spec.arms_per_step).map(|_| rng.random::<f64>()).collect();
        Offer { user, categories, qualities }
    }

    fn step_of(&self, offer: &Offer, t: usize, index: usize, eval: bool) -> Step {
        let spec = &self.spec;
        let arms = offer
            .categories
            .iter()
            .zip(&offer.qualities)
            .map(|(&c, &q)| {
                let mut a = one_hot(c, spec.categories());
                a.push(q);
                a
            })
            .collect();
        let means = offer
            .categories
            .iter()
            .zip(&offer.qualities)
            .map(|(&c, &q)| self.schedule.effective_mean(t, c, spec.base_mean(offer.user, c, q)))
            .collect();
        Step {
            index,
            context: one_hot(offer.user, spec.user_types()),
            arms,
            means,
            eval,
            interval: spec.day_of(t),
        }
    }

}

fn draw(spec: &DriftingNewsSpec, schedule: &DriftSchedule, step: &Step, arm: usize, t: usize, rng: &mut rng::Rng) -> f64 {
    let features = &step.arms[arm];
    let c = features[..spec.categories()]
        .iter()
        .position(|&v| v == 1.0)
        .expect("arm features start with a category one-hot");
    let user = step.context.iter().position(|&v| v == 1.0).unwrap_or(0);
    let q = features[spec.categories()];
    let base = f64::from(rng.random::<f64>() < spec.base_mean(user, c, q));
    schedule.apply(t, c, base, rng)
}

impl Environment for DriftingNewsEnv {
    fn context_dim(&self) -> usize {
        self.spec.user_types()
    }

    fn arm_dim(&self) -> usize {
        self.spec.categories() + 1
    }

    fn next_step(&mut self) -> Option<Step> {
        if self.step >= self.spec.online_steps {
            return None;
        }
        let offer = Self::offer(&self.spec, &mut self.ctx_rng);
        let t = self.spec.history_len() + self.step;
        let step = self.step_of(&offer, t, self.step, true);
        self.step += 1;
        Some(step)
    }

    fn reward(&mut self, step: &Step, arm: usize) -> f64 {
        let t = self.spec.history_len() + step.index;
        draw(&self.spec, &self.schedule, step, arm, t, &mut self.reward_rng)
    }

    /// Logged history from a uniformly random logging policy over the
    /// history days, labelled by day.
    fn warm_start_data(&mut self) -> Vec<LoggedSample> {
        let mut g = self.history_rng.clone();
        let rows = (0..self.spec.history_len())
            .map(|t| {
                let offer = Self::offer(&self.spec, &mut g);
                let step = self.step_of(&offer, t, t, false);
                let a = g.random_range(0..step.arms.len());
                let r = draw(&self.spec, &self.schedule, &step, a, t, &mut g);
                LoggedSample::new(step.context.clone(), step.arms[a].clone(), r, step.interval)
            })
            .collect();
        self.history_rng = g;
        rows
    }

    fn time_intervals(&self) -> usize {
        self.spec.history_days
    }
}
