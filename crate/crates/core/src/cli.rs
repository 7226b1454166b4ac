//! Command-line front door: subcommand definitions, config resolution with
//! `--set` overrides, and the goal-value heatmap export.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::analysis::{compare_runs, evaluate_checkpoint};
use crate::config::RunConfig;
use crate::env::{generate_price_profile, save_price_profile};
use crate::error::{Error, Result};
use crate::gsp::normalize_per_period;
use crate::harness;

#[derive(Debug, Parser)]
#[command(
    name = "gsplan",
    about = "Goal-space planning on DDPG for demand-response scheduling with terminal storage constraints"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one algorithm over the configured seeds and write run artifacts.
    Train {
        /// Config file (flat key=value or JSON); defaults apply when absent.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Typed overrides, e.g. --set algorithm=gsp_online --set episodes=40
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Output directory for metrics, timings, and checkpoints.
        #[arg(long)]
        out: PathBuf,
    },
    /// Roll out a checkpoint without exploration noise and print summary stats.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        episodes: usize,
    },
    /// Compare two or more finished runs episode by episode.
    Compare {
        #[arg(required = true, num_args = 2..)]
        dirs: Vec<PathBuf>,
    },
    /// Export per-period-normalized goal values from a goal-space run.
    ExportHeatmap { dir: PathBuf },
    /// Generate a deterministic day-night price profile CSV.
    GenPrices {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        hours: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        base: f64,
        #[arg(long, default_value_t = 0.5)]
        amplitude: f64,
        #[arg(long, default_value_t = 0.05)]
        noise_std: f64,
    },
}

/// Builds the effective config: file (or defaults), then `--set` overrides,
/// then validation.
pub fn resolve_config(config: Option<&Path>, overrides: &[String]) -> Result<RunConfig> {
    let mut cfg = match config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    cfg.apply_overrides(overrides)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Aggregates per-seed goal-value tables (mean value per goal across seeds),
/// normalizes per period, and writes `values_heatmap.csv` into the run
/// directory. Errors when the run has no goal-value tables (plain baseline).
pub fn export_heatmap(dir: &Path) -> Result<PathBuf> {
    let mut sums: BTreeMap<(usize, usize), (f64, usize)> = BTreeMap::new();
    let mut found_any = false;
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    entries.sort();
    for entry in entries {
        if !entry.is_dir()
            || !entry
                .file_name()
                .map(|n| n.to_string_lossy().starts_with("seed_"))
                .unwrap_or(false)
        {
            continue;
        }
        let values_path = entry.join("goal_values.csv");
        if !values_path.exists() {
            continue;
        }
        found_any = true;
        let text = std::fs::read_to_string(&values_path)?;
        for (idx, line) in text.lines().enumerate() {
            if idx == 0 {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 {
                return Err(Error::Parse {
                    line: idx + 1,
                    msg: format!("bad goal-value row in {}", values_path.display()),
                });
            }
            let period: usize = fields[0].parse().map_err(|_| Error::Parse {
                line: idx + 1,
                msg: "bad period".into(),
            })?;
            let level: usize = fields[1].parse().map_err(|_| Error::Parse {
                line: idx + 1,
                msg: "bad level".into(),
            })?;
            let value: f64 = fields[2].parse().map_err(|_| Error::Parse {
                line: idx + 1,
                msg: "bad value".into(),
            })?;
            let e = sums.entry((period, level)).or_insert((0.0, 0));
            e.0 += value;
            e.1 += 1;
        }
    }
    if !found_any {
        return Err(Error::Validation(format!(
            "{} has no goal-value tables; heatmaps need a goal-space run",
            dir.display()
        )));
    }
    let rows: Vec<(usize, usize, f64)> = sums
        .into_iter()
        .map(|((q, l), (sum, n))| (q, l, sum / n as f64))
        .collect();
    let normalized = normalize_per_period(&rows);
    let mut out = String::from("period,level,value,normalized_value\n");
    for (q, l, v, nv) in normalized {
        out.push_str(&format!("{q},{l},{v},{nv}\n"));
    }
    let path = dir.join("values_heatmap.csv");
    std::fs::write(&path, out)?;
    Ok(path)
}

/// Executes one parsed invocation.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { config, set, out } => {
            let cfg = resolve_config(config.as_deref(), &set)?;
            let artifacts = harness::train(&cfg, &out)?;
            let total: usize = artifacts.metrics.len();
            println!(
                "trained {} for {} episodes x {} seeds ({total} rows) -> {}",
                cfg.algorithm,
                cfg.episodes,
                cfg.seeds.len(),
                artifacts.out_dir.display()
            );
            Ok(())
        }
        Command::Evaluate {
            checkpoint,
            episodes,
        } => {
            let summary = evaluate_checkpoint(&checkpoint, episodes)?;
            print!("{summary}");
            Ok(())
        }
        Command::Compare { dirs } => {
            let comparison = compare_runs(&dirs)?;
            print!("{comparison}");
            Ok(())
        }
        Command::ExportHeatmap { dir } => {
            let path = export_heatmap(&dir)?;
            println!("wrote {}", path.display());
            Ok(())
        }
        Command::GenPrices {
            seed,
            hours,
            out,
            base,
            amplitude,
            noise_std,
        } => {
            if amplitude >= base {
                return Err(Error::Validation(
                    "amplitude must stay below base so prices remain positive".into(),
                ));
            }
            let profile = generate_price_profile(seed, hours, base, amplitude, noise_std);
            save_price_profile(&profile, &out)?;
            println!("wrote {} prices to {}", profile.len(), out.display());
            Ok(())
        }
    }
}
