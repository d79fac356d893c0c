//! Command-line front end. Exit codes: 0 success, 1 bad usage or invalid
//! configuration, 2 failure while running.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::ExperimentConfig;
use crate::error::HarnessError;
use crate::{runner, studies};

#[derive(Debug, Parser)]
#[command(name = "c3", about = "C3 Thompson sampling experiments", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the embedding model of the first c3 agent on the environment's
    /// warm-start data and save it.
    Train(Common),
    /// Run every agent of the config over all seeds.
    Run(Common),
    /// Sweep the kernel bandwidth of the first c3 agent.
    AblateSigma {
        #[command(flatten)]
        common: Common,
        /// Comma-separated bandwidths.
        #[arg(long, value_delimiter = ',', default_values_t = studies::DEFAULT_SIGMAS.to_vec())]
        sigmas: Vec<f64>,
    },
    /// Embedding distance to the anchor arm in the coupled-arm study.
    Couple(Common),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Run this seed only, instead of the config's seed list.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory; overrides `out_dir` in the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig, HarnessError> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(s) = self.seed {
            cfg.seeds = vec![s];
        }
        if let Some(o) = &self.out {
            cfg.out_dir.clone_from(o);
        }
        Ok(cfg)
    }
}

pub fn execute(command: &Command, log: &mut dyn Write) -> Result<(), HarnessError> {
    let mut say = |s: String| {
        // Progress output is best effort.
        let _ = writeln!(log, "{s}");
    };
    match command {
        Command::Train(c) => {
            let cfg = c.load()?;
            let seed = cfg.seeds[0];
            let (model, losses) = studies::train_model(&cfg, seed)?;
            studies::write_trained(&cfg.out_dir, &model, &losses)?;
            say(format!("trained {} epochs, final loss {:?}", losses.len(), losses.last()));
        }
        Command::Run(c) => {
            let cfg = c.load()?;
            for s in runner::run_experiment(&cfg)? {
                say(format!("{}: final regret {:.3} +/- {:.3}", s.label, s.mean(), s.half_width()));
            }
        }
        Command::AblateSigma { common, sigmas } => {
            let cfg = common.load()?;
            if sigmas.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
                return Err(HarnessError::Config("bandwidths must be positive".into()));
            }
            let results = studies::sigma_sweep(&cfg, sigmas)?;
            studies::write_sweep(&cfg.out_dir, &results)?;
            for r in &results {
                say(format!("sigma {}: final regret {:.3} +/- {:.3}", r.sigma, r.mean(), r.half_width()));
            }
        }
        Command::Couple(c) => {
            let cfg = c.load()?;
            let study = studies::coupling_study(&cfg, &cfg.seeds)?;
            studies::write_coupling(&cfg.out_dir, &study)?;
            for s in &study {
                say(format!("seed {}: spearman {:.3}", s.seed, s.spearman));
            }
        }
    }
    Ok(())
}

/// Parse `argv` (program name first), run, and return the exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli.command, &mut std::io::stderr()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
