//! Regret logs and their CSV exports.

use std::fmt::Write as _;
use std::path::Path;

use c3_core::stats::{half_width_196, mean, sample_sd};

use crate::error::HarnessError;

pub const REGRET_HEADER: &str = "step,seed,arm,reward,mu_chosen,mu_best,cum_regret";

#[derive(Debug, Clone, PartialEq)]
pub struct RegretRow {
    pub step: usize,
    pub seed: u64,
    pub arm: usize,
    pub reward: f64,
    pub mu_chosen: f64,
    pub mu_best: f64,
    pub cum_regret: f64,
}

/// Per-step records of one run, appended in step order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RegretLog {
    pub rows: Vec<RegretRow>,
}

impl RegretLog {
    pub fn push(&mut self, step: usize, seed: u64, arm: usize, reward: f64, mu_chosen: f64, mu_best: f64) {
        let prev = self.rows.last().map_or(0.0, |r| r.cum_regret);
        let gap = mu_best - mu_chosen;
        self.rows.push(RegretRow { step, seed, arm, reward, mu_chosen, mu_best, cum_regret: prev + gap });
    }

    pub fn final_regret(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.cum_regret)
    }

    pub fn gaps(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.mu_best - r.mu_chosen).collect()
    }

    /// Mean per-step gap over the last `n` rows.
    pub fn tail_mean_gap(&self, n: usize) -> f64 {
        let g = self.gaps();
        mean(&g[g.len().saturating_sub(n)..])
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(REGRET_HEADER);
        s.push('\n');
        for r in &self.rows {
            writeln!(s, "{},{},{},{},{},{},{}", r.step, r.seed, r.arm, r.reward, r.mu_chosen, r.mu_best, r.cum_regret)
                .expect("writing to a String cannot fail");
        }
        s
    }
}

/// Running sums of per-step gaps `mu_best - mu_chosen`.
pub fn cumulative_regret(gaps: &[f64]) -> Vec<f64> {
    gaps.iter()
        .scan(0.0, |acc, g| {
            *acc += g;
            Some(*acc)
        })
        .collect()
}

/// Final regrets of one agent across seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedSummary {
    pub label: String,
    pub finals: Vec<(u64, f64)>,
}

impl SeedSummary {
    pub fn values(&self) -> Vec<f64> {
        self.finals.iter().map(|f| f.1).collect()
    }
    pub fn mean(&self) -> f64 {
        mean(&self.values())
    }
    pub fn sd(&self) -> f64 {
        sample_sd(&self.values())
    }
    pub fn half_width(&self) -> f64 {
        half_width_196(&self.values())
    }
}

pub const SUMMARY_HEADER: &str = "agent,stat,seed,final_regret";

/// One row per (agent, seed) with `stat = final`, then `mean`, `sd` and
/// `half_width_196` rows per agent with an empty seed column.
pub fn summary_csv(summaries: &[SeedSummary]) -> String {
    let mut s = String::from(SUMMARY_HEADER);
    s.push('\n');
    for sum in summaries {
        for (seed, v) in &sum.finals {
            writeln!(s, "{},final,{seed},{v}", sum.label).expect("infallible");
        }
        writeln!(s, "{},mean,,{}", sum.label, sum.mean()).expect("infallible");
        writeln!(s, "{},sd,,{}", sum.label, sum.sd()).expect("infallible");
        writeln!(s, "{},half_width_196,,{}", sum.label, sum.half_width()).expect("infallible");
    }
    s
}

/// Final regret minus the lowest final regret among all agents on the same
/// seed.
pub fn relative_csv(summaries: &[SeedSummary]) -> String {
    let mut s = String::from("agent,seed,relative_regret\n");
    for sum in summaries {
        for (seed, v) in &sum.finals {
            let best = summaries
                .iter()
                .filter_map(|o| o.finals.iter().find(|f| f.0 == *seed).map(|f| f.1))
                .fold(f64::INFINITY, f64::min);
            writeln!(s, "{},{seed},{}", sum.label, v - best).expect("infallible");
        }
    }
    s
}

pub fn write_text(path: &Path, text: &str) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}
