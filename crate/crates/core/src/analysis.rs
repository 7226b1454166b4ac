//! Post-run analysis: noise-free evaluation of checkpoints, multi-run
//! comparison with per-episode mean/std across seeds, and the
//! steps-to-threshold statistic used for sample-efficiency comparisons.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use crate::config::RunConfig;
use crate::env::{self, PriceProfile};
use crate::error::{Error, Result};
use crate::harness::Checkpoint;

/// Trailing moving average with a window of up to `window` samples.
pub fn moving_average(xs: &[f64], window: usize) -> Vec<f64> {
    assert!(window > 0);
    let mut out = Vec::with_capacity(xs.len());
    let mut acc = 0.0;
    for i in 0..xs.len() {
        acc += xs[i];
        if i >= window {
            acc -= xs[i - window];
        }
        out.push(acc / window.min(i + 1) as f64);
    }
    out
}

/// Median of a sample; averages the middle pair for even lengths.
pub fn median(xs: &[f64]) -> f64 {
    assert!(!xs.is_empty());
    let mut sorted = xs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Threshold for "near final performance": `fraction` of the way to the best
/// final return measured from zero for positive returns, generalized through
/// `best - (1 - fraction) * |best|` so it stays reachable when returns are
/// negative.
pub fn return_threshold(best_final: f64, fraction: f64) -> f64 {
    best_final - (1.0 - fraction) * best_final.abs()
}

/// First environment step at which the smoothed per-episode return reaches
/// the threshold; `None` when it never does.
pub fn steps_to_threshold(
    returns: &[f64],
    window: usize,
    threshold: f64,
    steps_per_episode: usize,
) -> Option<usize> {
    moving_average(returns, window)
        .iter()
        .position(|&r| r >= threshold)
        .map(|e| (e + 1) * steps_per_episode)
}

/// Per-seed episode series parsed back from `metrics.csv`.
#[derive(Debug, Clone)]
pub struct SeedSeries {
    pub seed: u64,
    pub returns: Vec<f64>,
    pub terminal_ok: Vec<bool>,
    pub final_storage: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LoadedRun {
    pub dir: PathBuf,
    pub config: RunConfig,
    pub seeds: Vec<SeedSeries>,
}

impl LoadedRun {
    pub fn name(&self) -> String {
        format!(
            "{} ({})",
            self.config.algorithm,
            self.dir
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| self.dir.display().to_string())
        )
    }
}

/// Reads `config.json` and `metrics.csv` from a finished run directory.
pub fn load_run(dir: &Path) -> Result<LoadedRun> {
    let config = RunConfig::from_file(&dir.join("config.json"))?;
    let text = std::fs::read_to_string(dir.join("metrics.csv"))
        .map_err(|e| Error::Config(format!("cannot read metrics in {}: {e}", dir.display())))?;
    let mut by_seed: BTreeMap<u64, SeedSeries> = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        if idx == 0 {
            continue; // header
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 8 {
            return Err(Error::Parse {
                line: idx + 1,
                msg: "metrics row has too few columns".into(),
            });
        }
        let parse_f = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::Parse {
                line: idx + 1,
                msg: format!("`{s}` is not a number"),
            })
        };
        let seed: u64 = fields[0].parse().map_err(|_| Error::Parse {
            line: idx + 1,
            msg: "bad seed".into(),
        })?;
        let entry = by_seed.entry(seed).or_insert_with(|| SeedSeries {
            seed,
            returns: Vec::new(),
            terminal_ok: Vec::new(),
            final_storage: Vec::new(),
        });
        entry.returns.push(parse_f(fields[2])?);
        entry.final_storage.push(parse_f(fields[5])?);
        entry.terminal_ok.push(fields[6] == "1");
    }
    if by_seed.is_empty() {
        return Err(Error::Validation(format!(
            "no metric rows in {}",
            dir.display()
        )));
    }
    Ok(LoadedRun {
        dir: dir.to_path_buf(),
        config,
        seeds: by_seed.into_values().collect(),
    })
}

#[derive(Debug, Clone)]
pub struct RunThresholdStats {
    pub name: String,
    pub per_seed_steps: Vec<Option<usize>>,
    /// Median across seeds with unreached seeds counted at one step past the
    /// training budget.
    pub median_steps: f64,
    pub final_smoothed_mean: f64,
}

/// Aligned comparison of several finished runs.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub episodes: usize,
    pub steps_per_episode: usize,
    pub threshold: f64,
    pub run_names: Vec<String>,
    /// `per_episode[e][r]` = (mean, std) of run `r` at episode `e`.
    pub per_episode: Vec<Vec<(f64, f64)>>,
    pub thresholds: Vec<RunThresholdStats>,
}

/// Compares finished runs: per-episode mean and std across seeds, plus
/// steps-to-threshold where the threshold is a configured fraction of the
/// best smoothed final return across all runs. Horizon and episode counts
/// must match.
pub fn compare_runs(dirs: &[PathBuf]) -> Result<Comparison> {
    if dirs.len() < 2 {
        return Err(Error::Usage("compare needs at least two run directories".into()));
    }
    let runs: Vec<LoadedRun> = dirs.iter().map(|d| load_run(d)).collect::<Result<_>>()?;
    let episodes = runs[0].config.episodes;
    let horizon = runs[0].config.horizon;
    for r in &runs {
        if r.config.episodes != episodes || r.config.horizon != horizon {
            return Err(Error::Validation(format!(
                "run {} has a different horizon or episode count",
                r.dir.display()
            )));
        }
        for s in &r.seeds {
            if s.returns.len() != episodes {
                return Err(Error::Validation(format!(
                    "run {} seed {} has {} episodes, expected {episodes}",
                    r.dir.display(),
                    s.seed,
                    s.returns.len()
                )));
            }
        }
    }
    let window = runs[0].config.smoothing_window;
    let fraction = runs[0].config.threshold_fraction;

    // threshold anchored at the best mean smoothed final return
    let final_means: Vec<f64> = runs
        .iter()
        .map(|r| {
            let finals: Vec<f64> = r
                .seeds
                .iter()
                .map(|s| *moving_average(&s.returns, window).last().unwrap())
                .collect();
            mean_std(&finals).0
        })
        .collect();
    let best_final = final_means
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let threshold = return_threshold(best_final, fraction);

    let budget_cap = (episodes * horizon + 1) as f64;
    let thresholds = runs
        .iter()
        .zip(&final_means)
        .map(|(r, &final_mean)| {
            let per_seed_steps: Vec<Option<usize>> = r
                .seeds
                .iter()
                .map(|s| steps_to_threshold(&s.returns, window, threshold, horizon))
                .collect();
            let as_f: Vec<f64> = per_seed_steps
                .iter()
                .map(|s| s.map(|v| v as f64).unwrap_or(budget_cap))
                .collect();
            RunThresholdStats {
                name: r.name(),
                per_seed_steps,
                median_steps: median(&as_f),
                final_smoothed_mean: final_mean,
            }
        })
        .collect();

    let per_episode = (0..episodes)
        .map(|e| {
            runs.iter()
                .map(|r| {
                    let at_e: Vec<f64> = r.seeds.iter().map(|s| s.returns[e]).collect();
                    mean_std(&at_e)
                })
                .collect()
        })
        .collect();

    Ok(Comparison {
        episodes,
        steps_per_episode: horizon,
        threshold,
        run_names: runs.iter().map(|r| r.name()).collect(),
        per_episode,
        thresholds,
    })
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "threshold return: {:.4}", self.threshold)?;
        for t in &self.thresholds {
            let steps: Vec<String> = t
                .per_seed_steps
                .iter()
                .map(|s| match s {
                    Some(v) => v.to_string(),
                    None => "not reached".into(),
                })
                .collect();
            writeln!(
                f,
                "{}: final smoothed {:.4}, median steps-to-threshold {:.0}, per seed [{}]",
                t.name,
                t.final_smoothed_mean,
                t.median_steps,
                steps.join(", ")
            )?;
        }
        writeln!(f, "episode, then mean+-std per run")?;
        for e in 0..self.episodes {
            write!(f, "{e:>4}")?;
            for (mean, std) in &self.per_episode[e] {
                write!(f, "  {mean:>10.4}+-{std:<8.4}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Summary of noise-free rollouts from a checkpoint.
#[derive(Debug, Clone)]
pub struct EvalSummary {
    pub episodes: usize,
    pub mean_return: f64,
    pub satisfaction_rate: f64,
    pub returns: Vec<f64>,
    pub final_storages: Vec<f64>,
}

/// Rolls out the checkpointed policy without exploration noise. The plant and
/// prices are taken from the checkpoint itself, so rollouts reproduce the
/// training environment exactly.
pub fn evaluate_checkpoint(path: &Path, episodes: usize) -> Result<EvalSummary> {
    if episodes == 0 {
        return Err(Error::Usage("evaluation needs at least one episode".into()));
    }
    let ckpt = Checkpoint::load(path)?;
    let profile = PriceProfile::new(ckpt.prices.clone())?;
    let mut returns = Vec::with_capacity(episodes);
    let mut final_storages = Vec::with_capacity(episodes);
    let mut satisfied = 0usize;
    for _ in 0..episodes {
        let mut state = env::reset(&ckpt.env, &profile, ckpt.initial_level)?;
        let mut total = 0.0;
        for _ in 0..ckpt.env.horizon_steps {
            let action = ckpt.agent.greedy_action(&state.to_features());
            let out = env::step(&state, action, &ckpt.env, &profile)?;
            total += out.reward.total;
            state = out.state;
        }
        if env::terminal_satisfied(state.tank_level, &ckpt.env) {
            satisfied += 1;
        }
        returns.push(total);
        final_storages.push(state.tank_level);
    }
    Ok(EvalSummary {
        episodes,
        mean_return: mean_std(&returns).0,
        satisfaction_rate: satisfied as f64 / episodes as f64,
        returns,
        final_storages,
    })
}

impl fmt::Display for EvalSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "episodes: {}", self.episodes)?;
        writeln!(f, "mean return: {:.4}", self.mean_return)?;
        writeln!(f, "terminal satisfaction rate: {:.3}", self.satisfaction_rate)?;
        let (mean, std) = mean_std(&self.final_storages);
        writeln!(f, "final storage: {mean:.4}+-{std:.4}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moving_average_trailing_window() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ma = moving_average(&xs, 2);
        assert_eq!(ma, vec![1.0, 1.5, 2.5, 3.5]);
    }

    #[test]
    fn median_odd_and_even() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn mean_std_hand_example() {
        let (mean, std) = mean_std(&[1.0, 3.0]);
        assert_eq!(mean, 2.0);
        assert_eq!(std, 1.0);
    }

    #[test]
    fn threshold_generalizes_to_negative_returns() {
        // positive best: plain fraction
        assert!((return_threshold(10.0, 0.8) - 8.0).abs() < 1e-12);
        // negative best: same distance below the best, still reachable
        assert!((return_threshold(-10.0, 0.8) - (-12.0)).abs() < 1e-12);
    }

    #[test]
    fn steps_to_threshold_first_crossing_or_none() {
        let returns = [0.0, 0.0, 5.0, 5.0];
        assert_eq!(steps_to_threshold(&returns, 1, 4.0, 10), Some(30));
        assert_eq!(steps_to_threshold(&returns, 1, 99.0, 10), None);
    }
}
