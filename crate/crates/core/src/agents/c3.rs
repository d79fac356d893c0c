//! The C3 agent: embed each (context, arm) pair, form a Beta posterior from
//! the reference store, Thompson-sample, and append the observed outcome.

use rand::seq::index;
use rand::Rng;

use crate::agents::{argmax, Agent};
use crate::data::{joint_input, LoggedSample};
use crate::embedding::{train, MlpParams, TrainingConfig};
use crate::error::{Error, Result};
use crate::kernel::{iwkr_from_kernel, nwkr_from_kernel, KernelConfig, ReferenceStore};
use crate::posterior::{thompson_draw, BetaParams};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EvictionMode {
    /// Each stored sample leaves independently with probability `fraction`.
    #[default]
    Bernoulli,
    /// Exactly `round(fraction * n)` samples leave, chosen uniformly.
    ExactCount,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Eviction {
    /// Evict after every `period` observations; 0 disables.
    pub period: usize,
    pub fraction: f64,
    pub mode: EvictionMode,
}

impl Eviction {
    pub const DISABLED: Self = Self { period: 0, fraction: 0.0, mode: EvictionMode::Bernoulli };

    pub fn every(period: usize, fraction: f64) -> Self {
        Self { period, fraction, mode: EvictionMode::Bernoulli }
    }

    pub fn is_active(&self) -> bool {
        self.period > 0 && self.fraction > 0.0
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.fraction) {
            return Err(Error::InvalidConfig(format!(
                "eviction fraction must be in [0, 1), got {}",
                self.fraction
            )));
        }
        Ok(())
    }
}

impl Default for Eviction {
    fn default() -> Self {
        Self::DISABLED
    }
}

/// Which kernel regression sets the posterior mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Estimator {
    #[default]
    Iwkr,
    /// Plain Nadaraya-Watson, without importance weights.
    Nwkr,
}

#[derive(Debug, Clone, PartialEq)]
pub struct C3Config {
    pub kernel: KernelConfig,
    pub eviction: Eviction,
    pub estimator: Estimator,
    /// Fit the embedding model on the warm-start data first.
    pub training: Option<TrainingConfig>,
    /// Put the embedded warm-start data into the reference store.
    pub seed_store: bool,
}

impl Default for C3Config {
    fn default() -> Self {
        Self {
            kernel: KernelConfig { sigma: 1.0, truncation_radius: None },
            eviction: Eviction::DISABLED,
            estimator: Estimator::Iwkr,
            training: None,
            seed_store: false,
        }
    }
}

/// Outcome of one selection: chosen index, every arm's draw and embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub index: usize,
    pub draws: Vec<f64>,
    pub embeddings: Vec<Vec<f64>>,
}

/// Embedding and kernel vector of the arm last selected, kept so the
/// following observation can append without recomputing them.
#[derive(Debug, Clone)]
struct Pending {
    input: Vec<f64>,
    embedding: Vec<f64>,
    kvec: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct C3Agent {
    name: String,
    phi: MlpParams,
    store: ReferenceStore,
    config: C3Config,
    step_counter: usize,
    rng: rng::Rng,
    evict_rng: rng::Rng,
    pending: Option<Pending>,
}

impl C3Agent {
    pub fn new(phi: MlpParams, config: C3Config, seed: u64) -> Result<Self> {
        config.eviction.validate()?;
        if let Some(t) = &config.training {
            t.validate()?;
        }
        let store = ReferenceStore::new(phi.output_dim(), config.kernel)?;
        Ok(Self {
            name: "c3".into(),
            phi,
            store,
            config,
            step_counter: 0,
            rng: rng::stream(seed, "agent"),
            evict_rng: rng::stream(seed, "agent/evict"),
            pending: None,
        })
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn phi(&self) -> &MlpParams {
        &self.phi
    }

    pub fn store(&self) -> &ReferenceStore {
        &self.store
    }

    /// Replace the store, e.g. with one loaded from disk. Its dimension and
    /// kernel must match the agent's.
    pub fn set_store(&mut self, store: ReferenceStore) -> Result<()> {
        if store.dim() != self.phi.output_dim() {
            return Err(Error::DimensionMismatch { expected: self.phi.output_dim(), found: store.dim() });
        }
        if *store.config() != self.config.kernel {
            return Err(Error::InvalidConfig("store kernel differs from the agent's".into()));
        }
        self.store = store;
        self.pending = None;
        Ok(())
    }

    pub fn config(&self) -> &C3Config {
        &self.config
    }

    pub fn step_counter(&self) -> usize {
        self.step_counter
    }

    pub fn embed(&self, context: &[f64], arm: &[f64]) -> Result<Vec<f64>> {
        self.phi.forward(&joint_input(context, arm))
    }

    /// Posterior for a precomputed kernel vector under the configured estimator.
    fn posterior(&self, kvec: &[f64]) -> BetaParams {
        match self.config.estimator {
            Estimator::Iwkr => BetaParams::from_kernel_vector(kvec, &self.store, None),
            Estimator::Nwkr => {
                let eta: f64 = kvec.iter().sum();
                match nwkr_from_kernel(kvec, self.store.rewards(), None) {
                    Ok(p) => BetaParams::from_estimate(p, eta),
                    Err(_) => BetaParams::UNIFORM,
                }
            }
        }
    }

    /// Posterior mean estimate at an embedding, if the store supports it.
    pub fn estimate(&self, embedding: &[f64]) -> Result<f64> {
        let kvec = self.store.kernel_vector(embedding)?;
        match self.config.estimator {
            Estimator::Iwkr => iwkr_from_kernel(&kvec, self.store.rewards(), self.store.accumulators(), None),
            Estimator::Nwkr => nwkr_from_kernel(&kvec, self.store.rewards(), None),
        }
    }

    /// Embed every arm, draw from each posterior in arm order and return the
    /// argmax.
    pub fn select_detailed(&mut self, context: &[f64], arms: &[Vec<f64>]) -> Result<Selection> {
        if arms.is_empty() {
            return Err(Error::Empty("arm set"));
        }
        let mut draws = Vec::with_capacity(arms.len());
        let mut embeddings = Vec::with_capacity(arms.len());
        let mut kvecs = Vec::with_capacity(arms.len());
        for arm in arms {
            let e = self.embed(context, arm)?;
            let kvec = self.store.kernel_vector(&e)?;
            let post = self.posterior(&kvec);
            draws.push(thompson_draw(&post, &mut self.rng));
            embeddings.push(e);
            kvecs.push(kvec);
        }
        let index = argmax(draws.iter().copied());
        self.pending = Some(Pending {
            input: joint_input(context, &arms[index]),
            embedding: embeddings[index].clone(),
            kvec: kvecs.swap_remove(index),
        });
        Ok(Selection { index, draws, embeddings })
    }

    /// Append an embedded outcome, then evict if this step is due.
    pub fn observe_embedding(&mut self, embedding: &[f64], reward: f64, kvec: Option<&[f64]>) -> Result<()> {
        match kvec {
            Some(k) => self.store.append_sample(embedding, reward, k)?,
            None => self.store.insert(embedding, reward)?,
        }
        self.pending = None;
        self.step_counter += 1;
        let ev = self.config.eviction;
        if ev.is_active() && self.step_counter % ev.period == 0 {
            self.evict()?;
        }
        Ok(())
    }

    /// Remove stored samples according to the eviction mode.
    pub fn evict(&mut self) -> Result<()> {
        let n = self.store.len();
        let f = self.config.eviction.fraction;
        let drop: Vec<usize> = match self.config.eviction.mode {
            EvictionMode::Bernoulli => (0..n).filter(|_| self.evict_rng.random::<f64>() < f).collect(),
            EvictionMode::ExactCount => {
                let k = ((n as f64 * f).round() as usize).min(n);
                let mut v = index::sample(&mut self.evict_rng, n, k).into_vec();
                v.sort_unstable();
                v
            }
        };
        self.store.remove_samples(&drop)
    }

    fn seed_store(&mut self, data: &[LoggedSample]) -> Result<()> {
        let dim = self.phi.output_dim();
        let mut embeddings = Vec::with_capacity(data.len() * dim);
        for s in data {
            embeddings.extend(self.phi.forward(&s.input())?);
        }
        let rewards = data.iter().map(|s| s.reward).collect();
        let mut store = ReferenceStore::from_samples(dim, self.config.kernel, embeddings, rewards, None)?;
        store.set_checkpoint_interval(self.store.checkpoint_interval());
        self.store = store;
        Ok(())
    }
}

impl Agent for C3Agent {
    fn name(&self) -> &str {
        &self.name
    }

    fn warm_start(&mut self, data: &[LoggedSample]) -> Result<()> {
        if data.is_empty() {
            return Ok(());
        }
        if let Some(t) = &self.config.training {
            self.phi = train(data, t, self.phi.clone())?.params;
        }
        if self.config.seed_store {
            self.seed_store(data)?;
        }
        Ok(())
    }

    fn select(&mut self, context: &[f64], arms: &[Vec<f64>]) -> Result<usize> {
        Ok(self.select_detailed(context, arms)?.index)
    }

    fn observe(&mut self, context: &[f64], arm: &[f64], reward: f64) -> Result<()> {
        let input = joint_input(context, arm);
        match self.pending.take() {
            Some(p) if p.input == input => self.observe_embedding(&p.embedding, reward, Some(&p.kvec)),
            _ => {
                let e = self.phi.forward(&input)?;
                self.observe_embedding(&e, reward, None)
            }
        }
    }
}
