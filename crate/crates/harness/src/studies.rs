//! Studies built on top of the runner: the bandwidth sweep, the
//! coupled-arm embedding geometry, and stand-alone model training.

use std::fmt::Write as _;
use std::path::Path;

use c3_core::embedding::MlpParams;
use c3_core::env::{coupling_rho, one_hot, smoothed_rate};
use c3_core::stats::{half_width_196, mean, sample_sd, spearman};
use c3_core::LoggedSample;
use rayon::prelude::*;

use crate::config::{AgentSpec, C3Spec, EnvSpec, ExperimentConfig};
use crate::error::HarnessError;
use crate::metrics::write_text;
use crate::persist;
use crate::runner::{build_env, prepare_model, run_single};

pub const DEFAULT_SIGMAS: [f64; 5] = [0.33, 0.5, 1.0, 2.0, 3.0];

/// The first C3 agent of a config, used as the template for the studies.
pub fn c3_template(cfg: &ExperimentConfig) -> Result<&C3Spec, HarnessError> {
    cfg.agents
        .iter()
        .find_map(|a| match a {
            AgentSpec::C3(c) => Some(c),
            _ => None,
        })
        .ok_or_else(|| HarnessError::Config("config needs a c3 agent".into()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SigmaResult {
    pub sigma: f64,
    pub finals: Vec<(u64, f64)>,
}

impl SigmaResult {
    pub fn values(&self) -> Vec<f64> {
        self.finals.iter().map(|f| f.1).collect()
    }
    pub fn mean(&self) -> f64 {
        mean(&self.values())
    }
    pub fn half_width(&self) -> f64 {
        half_width_196(&self.values())
    }
    /// `[mean - h, mean + h]` with the 1.96-sigma half-width.
    pub fn interval(&self) -> (f64, f64) {
        let (m, h) = (self.mean(), self.half_width());
        (m - h, m + h)
    }
}

/// Final regret of the template C3 agent for every (sigma, seed). Only the
/// online bandwidth varies: the embedding model is fitted at the template's
/// training bandwidth, so every sigma sees the same embedding space.
pub fn sigma_sweep(cfg: &ExperimentConfig, sigmas: &[f64]) -> Result<Vec<SigmaResult>, HarnessError> {
    let template = c3_template(cfg)?;
    let jobs: Vec<(usize, u64)> = (0..sigmas.len()).flat_map(|i| cfg.seeds.iter().map(move |&s| (i, s))).collect();
    let finals: Vec<f64> = jobs
        .par_iter()
        .map(|&(i, seed)| {
            let spec = C3Spec {
                sigma: sigmas[i],
                train_sigma: Some(template.train_sigma.unwrap_or(template.sigma)),
                label: Some(format!("c3_sigma_{}", sigmas[i])),
                ..template.clone()
            };
            let r = run_single(&cfg.environment, &AgentSpec::C3(spec), &cfg.training, seed, cfg.horizon)?;
            Ok(r.log.final_regret())
        })
        .collect::<Result<_, HarnessError>>()?;
    Ok(sigmas
        .iter()
        .enumerate()
        .map(|(i, &sigma)| SigmaResult {
            sigma,
            finals: jobs.iter().zip(&finals).filter(|(j, _)| j.0 == i).map(|(j, &f)| (j.1, f)).collect(),
        })
        .collect())
}

/// `ablation.csv` (one row per sigma) and `ablation_seeds.csv`.
pub fn write_sweep(out: &Path, results: &[SigmaResult]) -> Result<(), HarnessError> {
    let mut summary = String::from("sigma,seeds,mean_final_regret,sd,half_width_196\n");
    let mut seeds = String::from("sigma,seed,final_regret\n");
    for r in results {
        let v = r.values();
        writeln!(summary, "{},{},{},{},{}", r.sigma, v.len(), r.mean(), sample_sd(&v), r.half_width()).expect("infallible");
        for (s, f) in &r.finals {
            writeln!(seeds, "{},{s},{f}", r.sigma).expect("infallible");
        }
    }
    write_text(&out.join("ablation.csv"), &summary)?;
    write_text(&out.join("ablation_seeds.csv"), &seeds)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingRow {
    pub arm: usize,
    pub rho: f64,
    /// Embedding distance to the anchor arm.
    pub distance: f64,
    /// Coupling of the arm's per-episode empirical rates with the anchor's.
    pub empirical_coupling: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingSeed {
    pub seed: u64,
    pub rows: Vec<CouplingRow>,
    /// Spearman rank correlation of `rho` against `distance`.
    pub spearman: f64,
    /// Embedding of every arm, anchor first.
    pub embeddings: Vec<Vec<f64>>,
}

/// Per-episode smoothed success rate of every arm in logged one-hot data.
fn episode_rates(data: &[LoggedSample], arms: usize, episodes: usize) -> Vec<Vec<f64>> {
    let mut hits = vec![vec![0usize; episodes]; arms];
    let mut pulls = vec![vec![0usize; episodes]; arms];
    for s in data {
        let a = s.arm.iter().position(|&v| v == 1.0).expect("one-hot arm");
        let t = s.interval as usize;
        pulls[a][t] += 1;
        hits[a][t] += usize::from(s.reward == 1.0);
    }
    (0..arms).map(|a| (0..episodes).map(|t| smoothed_rate(hits[a][t], pulls[a][t])).collect()).collect()
}

/// Train on the coupled-arm log of one seed and measure how far each arm
/// lands from the anchor in embedding space.
pub fn coupling_seed(cfg: &ExperimentConfig, seed: u64) -> Result<CouplingSeed, HarnessError> {
    let EnvSpec::Coupled { correlations, episodes, .. } = &cfg.environment else {
        return Err(HarnessError::Config("the coupling study needs a coupled environment".into()));
    };
    let spec = c3_template(cfg)?;
    let mut env = build_env(&cfg.environment, seed)?;
    let data = env.warm_start_data();
    let k = correlations.len() + 1;
    let (phi, _) = prepare_model(spec, &cfg.training, k, env.time_intervals(), &data, seed)?;
    let embeddings: Vec<Vec<f64>> = (0..k).map(|a| phi.forward(&one_hot(a, k))).collect::<Result<_, _>>()?;
    let rates = episode_rates(&data, k, *episodes);
    let mut rows = Vec::with_capacity(k - 1);
    for (i, &rho) in correlations.iter().enumerate() {
        let a = i + 1;
        let distance = embeddings[a].iter().zip(&embeddings[0]).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        rows.push(CouplingRow { arm: a, rho, distance, empirical_coupling: coupling_rho(&rates[0], &rates[a])? });
    }
    let rhos: Vec<f64> = rows.iter().map(|r| r.rho).collect();
    let dists: Vec<f64> = rows.iter().map(|r| r.distance).collect();
    Ok(CouplingSeed { seed, spearman: spearman(&rhos, &dists), rows, embeddings })
}

pub fn coupling_study(cfg: &ExperimentConfig, seeds: &[u64]) -> Result<Vec<CouplingSeed>, HarnessError> {
    seeds.par_iter().map(|&s| coupling_seed(cfg, s)).collect()
}

/// `coupling.csv`, `spearman.csv` and `embeddings.csv`.
pub fn write_coupling(out: &Path, study: &[CouplingSeed]) -> Result<(), HarnessError> {
    let mut rows = String::from("seed,arm,rho,distance,empirical_coupling\n");
    let mut sp = String::from("seed,spearman\n");
    let mut emb = String::from("seed,arm,coords\n");
    for s in study {
        for r in &s.rows {
            writeln!(rows, "{},{},{},{},{}", s.seed, r.arm, r.rho, r.distance, r.empirical_coupling).expect("infallible");
        }
        writeln!(sp, "{},{}", s.seed, s.spearman).expect("infallible");
        for (a, e) in s.embeddings.iter().enumerate() {
            let coords: Vec<String> = e.iter().map(f64::to_string).collect();
            writeln!(emb, "{},{a},{}", s.seed, coords.join(" ")).expect("infallible");
        }
    }
    write_text(&out.join("coupling.csv"), &rows)?;
    write_text(&out.join("spearman.csv"), &sp)?;
    write_text(&out.join("embeddings.csv"), &emb)
}

/// Fit the template C3 agent's model on the environment's warm-start data.
pub fn train_model(cfg: &ExperimentConfig, seed: u64) -> Result<(MlpParams, Vec<f64>), HarnessError> {
    let spec = C3Spec { train: true, ..c3_template(cfg)?.clone() };
    let mut env = build_env(&cfg.environment, seed)?;
    let data = env.warm_start_data();
    if data.is_empty() {
        return Err(HarnessError::Config("environment provides no training data".into()));
    }
    prepare_model(&spec, &cfg.training, env.context_dim() + env.arm_dim(), env.time_intervals(), &data, seed)
}

/// `model.bin` and `train_loss.csv`.
pub fn write_trained(out: &Path, model: &MlpParams, losses: &[f64]) -> Result<(), HarnessError> {
    persist::save_model(&out.join("model.bin"), model)?;
    let mut t = String::from("epoch,loss\n");
    for (e, l) in losses.iter().enumerate() {
        writeln!(t, "{e},{l}").expect("infallible");
    }
    write_text(&out.join("train_loss.csv"), &t)
}
