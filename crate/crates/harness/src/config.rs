//! Experiment configuration, read from TOML. Unknown keys are rejected.
//!
//! ```toml
//! seeds = [0, 1, 2]
//! horizon = 5000
//! out_dir = "runs/tabular"
//!
//! [environment]
//! kind = "tabular"
//! n_train = 4000
//! n_test = 1000
//!
//! [training]
//! epochs = 4
//!
//! [[agents]]
//! kind = "c3"
//! hidden = [64]
//! embed_dim = 8
//!
//! [[agents]]
//! kind = "uniform"
//! ```

use std::path::{Path, PathBuf};

use c3_core::agents::{Estimator, Eviction, EvictionMode};
use c3_core::embedding::{ModelSelection, TrainingConfig};
use c3_core::env::coupled::DEFAULT_CORRELATIONS;
use c3_core::env::DriftingNewsSpec;
use serde::Deserialize;

use crate::error::HarnessError;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seeds: Vec<u64>,
    /// Upper bound on online steps per run.
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    pub environment: EnvSpec,
    #[serde(default)]
    pub training: TrainingSection,
    pub agents: Vec<AgentSpec>,
    /// Also write final regrets relative to the best agent of each seed.
    #[serde(default)]
    pub relative_regret: bool,
}

fn default_horizon() -> usize {
    usize::MAX
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvSpec {
    /// Classification task streamed as 4 training steps then 1 evaluation
    /// step. Synthetic 2-D data unless `dataset` names a CSV file.
    Tabular {
        #[serde(default = "default_n_train")]
        n_train: usize,
        #[serde(default = "default_n_test")]
        n_test: usize,
        #[serde(default)]
        dataset: Option<PathBuf>,
    },
    /// Anchor-coupled one-hot arms; means redrawn every `episode_length` steps.
    Coupled {
        #[serde(default = "default_correlations")]
        correlations: Vec<f64>,
        #[serde(default = "default_concentration")]
        concentration: f64,
        #[serde(default = "default_episodes")]
        episodes: usize,
        #[serde(default = "default_samples_per_episode")]
        samples_per_episode: usize,
        #[serde(default = "default_episode_length")]
        episode_length: usize,
        #[serde(default = "default_online_steps")]
        online_steps: usize,
    },
    /// Click-rate drift: logged history then an online phase.
    Drift(DriftSection),
    /// Fixed Bernoulli arms without context.
    Bernoulli { means: Vec<f64>, steps: usize },
}

fn default_n_train() -> usize {
    4000
}
fn default_n_test() -> usize {
    1000
}
fn default_correlations() -> Vec<f64> {
    DEFAULT_CORRELATIONS.to_vec()
}
fn default_concentration() -> f64 {
    50.0
}
fn default_episodes() -> usize {
    200
}
fn default_samples_per_episode() -> usize {
    100
}
fn default_episode_length() -> usize {
    100
}
fn default_online_steps() -> usize {
    1000
}

/// Parameters of the drifting click-rate environment; omitted keys take
/// the environment's defaults.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DriftSection {
    pub online_steps: usize,
    pub history_steps_per_day: usize,
    pub history_days: usize,
    pub daily_probs: Vec<f64>,
    /// Base click rate by user type (rows) and category (columns).
    pub base_rates: Vec<Vec<f64>>,
    pub quality_slope: f64,
    pub arms_per_step: usize,
    /// Category whose click rate rises; all others fall.
    pub boosted: usize,
}

impl Default for DriftSection {
    fn default() -> Self {
        let d = DriftingNewsSpec::default();
        Self {
            online_steps: d.online_steps,
            history_steps_per_day: d.history_steps_per_day,
            history_days: d.history_days,
            daily_probs: d.daily_probs,
            base_rates: d.base_rates,
            quality_slope: d.quality_slope,
            arms_per_step: d.arms_per_step,
            boosted: d.boosted,
        }
    }
}

impl DriftSection {
    pub fn to_spec(&self) -> DriftingNewsSpec {
        DriftingNewsSpec {
            base_rates: self.base_rates.clone(),
            quality_slope: self.quality_slope,
            arms_per_step: self.arms_per_step,
            boosted: self.boosted,
            history_days: self.history_days,
            history_steps_per_day: self.history_steps_per_day,
            online_steps: self.online_steps,
            daily_probs: self.daily_probs.clone(),
        }
    }
}

/// Embedding training settings. Bandwidth, seed and interval count come
/// from the agent, the run seed and the environment.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub lr_decay: f64,
    pub lambda_ece: f64,
    pub ece_bins: usize,
    pub ref_fraction: f64,
    pub sample_fraction: f64,
    pub validation_fraction: f64,
    pub selection: Selection,
    pub weight_gradient: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    #[default]
    FinalEpoch,
    BestValidation,
}

impl Default for TrainingSection {
    fn default() -> Self {
        let d = TrainingConfig::default();
        Self {
            epochs: d.epochs,
            batch_size: d.batch_size,
            learning_rate: d.learning_rate,
            lr_decay: d.lr_decay,
            lambda_ece: d.lambda_ece,
            ece_bins: d.ece_bins,
            ref_fraction: d.ref_fraction,
            sample_fraction: d.sample_fraction,
            validation_fraction: d.validation_fraction,
            selection: Selection::FinalEpoch,
            weight_gradient: d.weight_gradient,
        }
    }
}

impl TrainingSection {
    pub fn to_config(&self, sigma: f64, truncation_radius: Option<f64>, time_intervals: usize, seed: u64) -> TrainingConfig {
        TrainingConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            lr_decay: self.lr_decay,
            lambda_ece: self.lambda_ece,
            ece_bins: self.ece_bins,
            ref_fraction: self.ref_fraction,
            sample_fraction: self.sample_fraction,
            time_intervals,
            sigma,
            truncation_radius,
            seed,
            validation_fraction: self.validation_fraction,
            selection: match self.selection {
                Selection::FinalEpoch => ModelSelection::FinalEpoch,
                Selection::BestValidation => ModelSelection::BestValidation,
            },
            weight_gradient: self.weight_gradient,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AgentSpec {
    C3(C3Spec),
    Linucb {
        #[serde(default)]
        label: Option<String>,
        #[serde(default = "default_alpha")]
        alpha: f64,
        #[serde(default = "default_lambda")]
        lambda: f64,
        #[serde(default = "yes")]
        warm_start: bool,
    },
    Lints {
        #[serde(default)]
        label: Option<String>,
        /// Posterior scale; the default follows from R = 0.01, eps = delta = 0.5.
        #[serde(default)]
        v: Option<f64>,
        #[serde(default = "default_lambda")]
        lambda: f64,
        #[serde(default = "yes")]
        warm_start: bool,
    },
    EpsGreedy {
        #[serde(default)]
        label: Option<String>,
        #[serde(default = "default_epsilon")]
        epsilon: f64,
        #[serde(default = "yes")]
        warm_start: bool,
    },
    Uniform {
        #[serde(default)]
        label: Option<String>,
    },
    /// Plays the arm with the highest true mean.
    Oracle {
        #[serde(default)]
        label: Option<String>,
    },
}

fn default_alpha() -> f64 {
    1.96
}
fn default_lambda() -> f64 {
    1.0
}
fn default_epsilon() -> f64 {
    0.1
}
fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct C3Spec {
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    /// Bandwidth used while fitting the embedding model; defaults to `sigma`.
    #[serde(default)]
    pub train_sigma: Option<f64>,
    #[serde(default)]
    pub truncation_radius: Option<f64>,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default = "default_embed_dim")]
    pub embed_dim: usize,
    #[serde(default)]
    pub estimator: EstimatorSpec,
    #[serde(default)]
    pub eviction: Option<EvictionSpec>,
    /// Put the embedded warm-start data into the reference store.
    #[serde(default)]
    pub seed_store: bool,
    /// Fit the embedding model on the warm-start data.
    #[serde(default = "yes")]
    pub train: bool,
    /// Start from a saved model instead of a fresh initialization.
    #[serde(default)]
    pub model: Option<PathBuf>,
}

fn default_sigma() -> f64 {
    1.0
}
fn default_hidden() -> Vec<usize> {
    vec![64]
}
fn default_embed_dim() -> usize {
    8
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorSpec {
    #[default]
    Iwkr,
    Nwkr,
}

impl From<EstimatorSpec> for Estimator {
    fn from(e: EstimatorSpec) -> Self {
        match e {
            EstimatorSpec::Iwkr => Estimator::Iwkr,
            EstimatorSpec::Nwkr => Estimator::Nwkr,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvictionSpec {
    pub period: usize,
    pub fraction: f64,
    #[serde(default)]
    pub exact_count: bool,
}

impl From<EvictionSpec> for Eviction {
    fn from(e: EvictionSpec) -> Self {
        Eviction {
            period: e.period,
            fraction: e.fraction,
            mode: if e.exact_count { EvictionMode::ExactCount } else { EvictionMode::Bernoulli },
        }
    }
}

impl AgentSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            AgentSpec::C3(_) => "c3",
            AgentSpec::Linucb { .. } => "linucb",
            AgentSpec::Lints { .. } => "lints",
            AgentSpec::EpsGreedy { .. } => "eps_greedy",
            AgentSpec::Uniform { .. } => "uniform",
            AgentSpec::Oracle { .. } => "oracle",
        }
    }

    /// Output label: the configured one or the kind.
    pub fn label(&self) -> String {
        let l = match self {
            AgentSpec::C3(c) => &c.label,
            AgentSpec::Linucb { label, .. }
            | AgentSpec::Lints { label, .. }
            | AgentSpec::EpsGreedy { label, .. }
            | AgentSpec::Uniform { label }
            | AgentSpec::Oracle { label } => label,
        };
        l.clone().unwrap_or_else(|| self.kind().to_string())
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            HarnessError::Config(m) => HarnessError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        if self.horizon == 0 {
            return bad("horizon must be at least 1".into());
        }
        if self.agents.is_empty() {
            return bad("at least one agent is required".into());
        }
        let mut labels: Vec<String> = self.agents.iter().map(AgentSpec::label).collect();
        labels.sort();
        if let Some(w) = labels.windows(2).find(|w| w[0] == w[1]) {
            return bad(format!("duplicate agent label {:?}", w[0]));
        }
        if let EnvSpec::Tabular { dataset: Some(p), .. } = &self.environment {
            if !p.exists() {
                return bad(format!("dataset {} does not exist", p.display()));
            }
        }
        for a in &self.agents {
            if let AgentSpec::C3(c) = a {
                if let Some(p) = &c.model {
                    if !p.exists() {
                        return bad(format!("model {} does not exist", p.display()));
                    }
                }
                if c.embed_dim == 0 || c.hidden.contains(&0) {
                    return bad("layer sizes must be positive".into());
                }
            }
        }
        Ok(())
    }
}
