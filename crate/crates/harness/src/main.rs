//! `mmloc` command line: bound sweeps, single estimation runs, and Monte
//! Carlo campaigns. All outputs are CSV files in the requested directory.

use clap::{Parser, Subcommand, ValueEnum};
use mmloc_harness::campaign::{
    derive_seed, run_bounds, run_montecarlo, run_trial, write_bounds, write_estimate,
    write_montecarlo,
};
use mmloc_harness::config::CampaignConfig;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Profile {
    /// 16x16 arrays, 16 beams, 10 subcarriers, 200 trials.
    Desk,
    /// 65x65 arrays, 32 beams, 20 subcarriers, 1000 trials.
    Paper,
}

#[derive(Parser)]
#[command(name = "mmloc", about = "Single-BS mm-wave positioning: bounds and estimator campaigns")]
struct Cli {
    /// Base parameter profile; a config file overrides it entirely.
    #[arg(long, value_enum, default_value = "desk", global = true)]
    profile: Profile,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// PEB/REB/CRB tables over the SNR grid, MS positions, and beam counts.
    Bounds {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// One synthesize -> estimate -> pose trial at a given seed.
    Estimate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Monte Carlo RMSE campaign over the SNR grid.
    Montecarlo {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(path: &Option<PathBuf>, profile: Profile) -> Result<CampaignConfig, String> {
    match path {
        Some(p) => CampaignConfig::load(p),
        None => Ok(match profile {
            Profile::Desk => CampaignConfig::desk(),
            Profile::Paper => CampaignConfig::paper(),
        }),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Bounds { config, out } => load_config(&config, cli.profile).and_then(|cfg| {
            let res = run_bounds(&cfg);
            write_bounds(&out, &res).map_err(|e| e.to_string())?;
            println!("wrote {} bound rows to {}", res.rows.len(), out.display());
            Ok(())
        }),
        Command::Estimate { config, seed, out } => {
            load_config(&config, cli.profile).and_then(|cfg| {
                let snr = cfg.snr_grid_db[cfg.snr_grid_db.len() - 1];
                let record = run_trial(&cfg, 0, snr, derive_seed(seed, 1, 0));
                write_estimate(&out, &cfg, &record).map_err(|e| e.to_string())?;
                println!(
                    "trial at {snr} dB: ok={} err_p={:.4} m err_alpha={:.4} rad ({})",
                    record.ok,
                    record.err_p_m,
                    record.err_alpha_rad,
                    out.display()
                );
                Ok(())
            })
        }
        Command::Montecarlo {
            config,
            trials,
            out,
        } => load_config(&config, cli.profile).and_then(|mut cfg| {
            if let Some(n) = trials {
                cfg.n_trials = n;
            }
            cfg.validate()?;
            let res = run_montecarlo(&cfg);
            write_montecarlo(&out, &res).map_err(|e| e.to_string())?;
            for row in &res.summary {
                println!(
                    "snr {:+.1} dB: {}/{} ok, rmse_p {:.4} m (peb {:.4}), rmse_alpha {:.5} rad (reb {:.5})",
                    row.snr_db, row.n_ok, row.n_trials, row.rmse_p_m, row.peb_m,
                    row.rmse_alpha_rad, row.reb_rad
                );
            }
            Ok(())
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
