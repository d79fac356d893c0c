//! Runs agents against environments and collects regret logs.

use std::path::Path;

use c3_core::agents::{Agent, C3Agent, C3Config, EpsGreedy, LinTs, LinUcb, UniformAgent};
use c3_core::embedding::{train, MlpParams};
use c3_core::env::{
    BernoulliArmsEnv, CoupledArmSpec, CoupledBandit, DriftingNewsEnv, Environment, TabularBanditEnv,
    TabularBanditTask, TabularDataset,
};
use c3_core::{rng, KernelConfig, LoggedSample, ReferenceStore};
use rayon::prelude::*;

use crate::config::{AgentSpec, C3Spec, EnvSpec, ExperimentConfig, TrainingSection};
use crate::error::HarnessError;
use crate::metrics::{relative_csv, summary_csv, write_text, RegretLog, SeedSummary};
use crate::persist;

pub fn build_env(spec: &EnvSpec, seed: u64) -> Result<Box<dyn Environment + Send>, HarnessError> {
    Ok(match spec {
        EnvSpec::Tabular { n_train, n_test, dataset } => match dataset {
            None => Box::new(TabularBanditEnv::synthetic(*n_train, *n_test, seed)?),
            Some(path) => {
                let data = TabularDataset::from_csv_path(path)?;
                let task = TabularBanditTask::split(data, *n_train, *n_test, &mut rng::stream(seed, "env/data"))?;
                Box::new(TabularBanditEnv::new(task))
            }
        },
        EnvSpec::Coupled { correlations, concentration, episodes, samples_per_episode, episode_length, online_steps } => {
            let spec = CoupledArmSpec {
                correlations: correlations.clone(),
                concentration: *concentration,
                episodes: *episodes,
                samples_per_episode: *samples_per_episode,
            };
            Box::new(CoupledBandit::new(spec, *episode_length, *online_steps, seed)?)
        }
        EnvSpec::Drift(d) => Box::new(DriftingNewsEnv::new(d.to_spec(), seed)?),
        EnvSpec::Bernoulli { means, steps } => Box::new(BernoulliArmsEnv::new(means.clone(), *steps, seed)?),
    })
}

/// Everything a single (agent, seed) run produces.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub label: String,
    pub seed: u64,
    pub log: RegretLog,
    /// Final embedding model and store of a C3 agent.
    pub model: Option<MlpParams>,
    pub store: Option<ReferenceStore>,
    /// Per-epoch training losses of a C3 agent.
    pub train_losses: Vec<f64>,
}

enum Player {
    C3(Box<C3Agent>),
    Other(Box<dyn Agent + Send>),
    Oracle,
}

/// Fit (or load) the embedding model of a C3 agent on the warm-start data.
pub fn prepare_model(
    spec: &C3Spec,
    training: &TrainingSection,
    input_dim: usize,
    time_intervals: usize,
    warm: &[LoggedSample],
    seed: u64,
) -> Result<(MlpParams, Vec<f64>), HarnessError> {
    let init = match &spec.model {
        Some(path) => persist::load_model(path)?,
        None => {
            let mut dims = vec![input_dim];
            dims.extend(&spec.hidden);
            dims.push(spec.embed_dim);
            MlpParams::init(&dims, &mut rng::stream(seed, "training/init"))?
        }
    };
    if init.input_dim() != input_dim {
        return Err(HarnessError::Config(format!(
            "model expects {} inputs, environment provides {input_dim}",
            init.input_dim()
        )));
    }
    if !spec.train || warm.is_empty() {
        return Ok((init, Vec::new()));
    }
    let cfg = training.to_config(spec.train_sigma.unwrap_or(spec.sigma), spec.truncation_radius, time_intervals, rng::stream_seed(seed, "training"));
    let report = train(warm, &cfg, init).map_err(|e| match e {
        c3_core::Error::Diverged { .. } => HarnessError::Runtime(format!("embedding training failed: {e}")),
        other => other.into(),
    })?;
    Ok((report.params, report.epoch_losses))
}

pub fn c3_config(spec: &C3Spec) -> Result<C3Config, HarnessError> {
    let kernel = match spec.truncation_radius {
        Some(r) => KernelConfig::truncated(spec.sigma, r)?,
        None => KernelConfig::new(spec.sigma)?,
    };
    Ok(C3Config {
        kernel,
        eviction: spec.eviction.map(Into::into).unwrap_or_default(),
        estimator: spec.estimator.into(),
        training: None,
        seed_store: spec.seed_store,
    })
}

/// Play one agent for one seed.
pub fn run_single(
    env_spec: &EnvSpec,
    agent: &AgentSpec,
    training: &TrainingSection,
    seed: u64,
    horizon: usize,
) -> Result<RunResult, HarnessError> {
    let mut env = build_env(env_spec, seed)?;
    let warm = env.warm_start_data();
    let dim = env.context_dim() + env.arm_dim();
    let mut train_losses = Vec::new();
    let mut player = match agent {
        AgentSpec::C3(spec) => {
            let (phi, losses) = prepare_model(spec, training, dim, env.time_intervals(), &warm, seed)?;
            train_losses = losses;
            let mut a = C3Agent::new(phi, c3_config(spec)?, seed)?.with_name(agent.label());
            a.warm_start(&warm)?;
            Player::C3(Box::new(a))
        }
        AgentSpec::Linucb { alpha, lambda, warm_start, .. } => {
            let mut a = LinUcb::new(dim, *alpha, *lambda)?;
            if *warm_start {
                a.warm_start(&warm)?;
            }
            Player::Other(Box::new(a))
        }
        AgentSpec::Lints { v, lambda, warm_start, .. } => {
            let v = v.unwrap_or_else(|| c3_core::agents::linear::lints_scale(0.01, 0.5, 0.5, dim));
            let mut a = LinTs::new(dim, v, *lambda, seed)?;
            if *warm_start {
                a.warm_start(&warm)?;
            }
            Player::Other(Box::new(a))
        }
        AgentSpec::EpsGreedy { epsilon, warm_start, .. } => {
            let mut a = EpsGreedy::new(*epsilon, seed)?;
            if *warm_start {
                a.warm_start(&warm)?;
            }
            Player::Other(Box::new(a))
        }
        AgentSpec::Uniform { .. } => Player::Other(Box::new(UniformAgent::new(seed))),
        AgentSpec::Oracle { .. } => Player::Oracle,
    };

    let mut log = RegretLog::default();
    let mut steps = 0;
    while steps < horizon {
        let Some(step) = env.next_step() else { break };
        steps += 1;
        let arm = match &mut player {
            Player::C3(a) => a.select(&step.context, &step.arms)?,
            Player::Other(a) => a.select(&step.context, &step.arms)?,
            Player::Oracle => c3_core::agents::argmax(step.means.iter().copied()),
        };
        let reward = env.reward(&step, arm);
        match &mut player {
            Player::C3(a) => a.observe(&step.context, &step.arms[arm], reward)?,
            Player::Other(a) => a.observe(&step.context, &step.arms[arm], reward)?,
            Player::Oracle => {}
        }
        if step.eval {
            log.push(step.index, seed, arm, reward, step.means[arm], step.best_mean());
        }
    }
    let (model, store) = match player {
        Player::C3(a) => (Some(a.phi().clone()), Some(a.store().clone())),
        _ => (None, None),
    };
    Ok(RunResult { label: agent.label(), seed, log, model, store, train_losses })
}

/// Every (agent, seed) pair of `cfg`, run in parallel; results come back
/// grouped by agent in config order, seeds in config order.
pub fn run_all(cfg: &ExperimentConfig) -> Result<Vec<Vec<RunResult>>, HarnessError> {
    let jobs: Vec<(usize, u64)> = (0..cfg.agents.len()).flat_map(|a| cfg.seeds.iter().map(move |&s| (a, s))).collect();
    let results: Vec<RunResult> = jobs
        .par_iter()
        .map(|&(a, s)| run_single(&cfg.environment, &cfg.agents[a], &cfg.training, s, cfg.horizon))
        .collect::<Result<_, _>>()?;
    let mut grouped: Vec<Vec<RunResult>> = (0..cfg.agents.len()).map(|_| Vec::new()).collect();
    for (r, &(a, _)) in results.into_iter().zip(&jobs) {
        grouped[a].push(r);
    }
    Ok(grouped)
}

pub fn summarize(grouped: &[Vec<RunResult>]) -> Vec<SeedSummary> {
    grouped
        .iter()
        .filter(|runs| !runs.is_empty())
        .map(|runs| SeedSummary {
            label: runs[0].label.clone(),
            finals: runs.iter().map(|r| (r.seed, r.log.final_regret())).collect(),
        })
        .collect()
}

/// Write per-agent regret logs, checkpoints and the summary files.
pub fn write_outputs(out: &Path, grouped: &[Vec<RunResult>], relative: bool) -> Result<Vec<SeedSummary>, HarnessError> {
    for runs in grouped {
        let Some(first) = runs.first() else { continue };
        let dir = out.join(&first.label);
        let mut csv = String::new();
        for (i, r) in runs.iter().enumerate() {
            let text = r.log.to_csv();
            // Keep a single header.
            csv.push_str(if i == 0 { &text } else { text.split_once('\n').map_or("", |t| t.1) });
            let seed_dir = dir.join(format!("seed_{}", r.seed));
            if let Some(m) = &r.model {
                persist::save_model(&seed_dir.join("model.bin"), m)?;
            }
            if let Some(s) = &r.store {
                persist::save_store(&seed_dir.join("store.bin"), s)?;
            }
            if !r.train_losses.is_empty() {
                let mut t = String::from("epoch,loss\n");
                for (e, l) in r.train_losses.iter().enumerate() {
                    t.push_str(&format!("{e},{l}\n"));
                }
                write_text(&seed_dir.join("train_loss.csv"), &t)?;
            }
        }
        write_text(&dir.join("regret.csv"), &csv)?;
    }
    let summaries = summarize(grouped);
    write_text(&out.join("summary.csv"), &summary_csv(&summaries))?;
    if relative {
        write_text(&out.join("relative.csv"), &relative_csv(&summaries))?;
    }
    Ok(summaries)
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<SeedSummary>, HarnessError> {
    let grouped = run_all(cfg)?;
    write_outputs(&cfg.out_dir, &grouped, cfg.relative_regret)
}
