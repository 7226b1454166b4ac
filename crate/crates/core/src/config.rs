//! Run configuration: one flat schema shared by the key=value text format,
//! the JSON format, and `--set` command-line overrides.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ddpg::AgentConfig;
use crate::env::{self, EnvParams, PriceProfile};
use crate::error::{Error, Result};
use crate::gsp::{GoalGrid, ModelTrainConfig};

/// Which training pipeline to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    /// Plain actor-critic baseline.
    Ddpg,
    /// Goal-space models pretrained on heuristic rollouts, then frozen.
    GspOffline,
    /// Goal-space models rebuilt from the agent's own data every episode.
    GspOnline,
    /// Online variant without the state-to-goal projection: the potential is
    /// a direct table lookup of the state's goal value.
    GspOnlineNp,
}

impl Algorithm {
    pub fn uses_goal_space(self) -> bool {
        !matches!(self, Algorithm::Ddpg)
    }

    /// Whether the potential goes through the learned state-to-goal heads.
    pub fn uses_projection(self) -> bool {
        matches!(self, Algorithm::GspOffline | Algorithm::GspOnline)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Ddpg => "ddpg",
            Algorithm::GspOffline => "gsp_offline",
            Algorithm::GspOnline => "gsp_online",
            Algorithm::GspOnlineNp => "gsp_online_np",
        }
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ddpg" => Ok(Algorithm::Ddpg),
            "gsp_offline" => Ok(Algorithm::GspOffline),
            "gsp_online" => Ok(Algorithm::GspOnline),
            "gsp_online_np" => Ok(Algorithm::GspOnlineNp),
            other => Err(Error::Config(format!(
                "unknown algorithm `{other}` (expected ddpg, gsp_offline, gsp_online, gsp_online_np)"
            ))),
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Complete description of a training run. Field names double as config keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    pub episodes: usize,
    pub seeds: Vec<u64>,
    /// Run seeds in parallel worker threads (per-seed results are unaffected).
    pub parallel_seeds: bool,

    // plant
    pub horizon: usize,
    pub dt: f64,
    pub tank_capacity: f64,
    pub demand: f64,
    pub u_min: f64,
    pub u_max: f64,
    pub tracking_lag: f64,
    pub power_c0: f64,
    pub power_c1: f64,
    pub power_c2: f64,
    pub terminal_target: f64,
    pub terminal_tolerance: f64,
    pub penalty_weight: f64,
    /// Penalty activation step; when absent, four steps before the horizon.
    pub activation_time: Option<usize>,
    pub terminal_bonus: f64,
    pub forecast_len: usize,
    pub initial_level: f64,

    // prices
    pub price_file: Option<String>,
    pub price_seed: u64,
    pub price_base: f64,
    pub price_amplitude: f64,
    pub price_noise_std: f64,

    // agent
    pub gamma: f64,
    pub tau: f64,
    pub noise_std: f64,
    pub batch_size: usize,
    pub learning_starts: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub hidden1: usize,
    pub hidden2: usize,
    pub buffer_capacity: usize,

    // goal space
    pub levels: usize,
    pub periods: usize,
    pub membership_tol_factor: f64,
    pub nearby_radius: usize,
    pub model_train_steps: usize,
    pub model_batch: usize,
    pub model_lr: f64,
    pub offline_pretrain_episodes: usize,
    pub offline_model_train_steps: usize,

    // analysis
    pub threshold_fraction: f64,
    pub smoothing_window: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            algorithm: Algorithm::Ddpg,
            episodes: 80,
            seeds: vec![0, 1, 2, 3, 4],
            parallel_seeds: true,

            horizon: 72,
            dt: 1.0,
            tank_capacity: 1.0,
            demand: 0.3,
            u_min: 0.05,
            u_max: 0.55,
            tracking_lag: 0.7,
            power_c0: 0.2,
            power_c1: 1.0,
            power_c2: 0.6,
            terminal_target: 0.7,
            terminal_tolerance: 0.05,
            penalty_weight: 10.0,
            activation_time: None,
            terminal_bonus: 20.0,
            forecast_len: 12,
            initial_level: 0.5,

            price_file: None,
            price_seed: 7,
            price_base: 1.0,
            price_amplitude: 0.5,
            price_noise_std: 0.05,

            gamma: 0.99,
            tau: 0.005,
            noise_std: 0.1,
            batch_size: 256,
            learning_starts: 1000,
            actor_lr: 3e-4,
            critic_lr: 3e-4,
            hidden1: 64,
            hidden2: 64,
            buffer_capacity: 50_000,

            levels: 40,
            periods: 16,
            membership_tol_factor: 0.4,
            nearby_radius: 5,
            model_train_steps: 150,
            model_batch: 64,
            model_lr: 1e-3,
            offline_pretrain_episodes: 50,
            offline_model_train_steps: 2000,

            threshold_fraction: 0.8,
            smoothing_window: 5,
        }
    }
}

macro_rules! parse_key {
    ($key:expr, $value:expr, $ty:ty) => {
        $value.parse::<$ty>().map_err(|_| {
            Error::Config(format!(
                "key `{}`: cannot parse `{}` as {}",
                $key,
                $value,
                stringify!($ty)
            ))
        })?
    };
}

impl RunConfig {
    /// Loads a config file: JSON when the content starts with `{`, otherwise
    /// flat `key = value` lines with `#` comments.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_str_any(&text)
    }

    pub fn from_str_any(text: &str) -> Result<Self> {
        if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
        } else {
            Self::from_flat_text(text)
        }
    }

    pub fn from_flat_text(text: &str) -> Result<Self> {
        let mut config = RunConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(Error::Parse {
                line: idx + 1,
                msg: "expected `key = value`".into(),
            })?;
            config.apply_kv(key.trim(), value.trim())?;
        }
        Ok(config)
    }

    /// Applies one typed override; rejects unknown keys by name.
    pub fn apply_kv(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "algorithm" => self.algorithm = value.parse()?,
            "episodes" => self.episodes = parse_key!(key, value, usize),
            "seeds" => {
                let mut seeds = Vec::new();
                for part in value.split(',') {
                    seeds.push(parse_key!(key, part.trim(), u64));
                }
                self.seeds = seeds;
            }
            "parallel_seeds" => self.parallel_seeds = parse_key!(key, value, bool),

            "horizon" => self.horizon = parse_key!(key, value, usize),
            "dt" => self.dt = parse_key!(key, value, f64),
            "tank_capacity" => self.tank_capacity = parse_key!(key, value, f64),
            "demand" => self.demand = parse_key!(key, value, f64),
            "u_min" => self.u_min = parse_key!(key, value, f64),
            "u_max" => self.u_max = parse_key!(key, value, f64),
            "tracking_lag" => self.tracking_lag = parse_key!(key, value, f64),
            "power_c0" => self.power_c0 = parse_key!(key, value, f64),
            "power_c1" => self.power_c1 = parse_key!(key, value, f64),
            "power_c2" => self.power_c2 = parse_key!(key, value, f64),
            "terminal_target" => self.terminal_target = parse_key!(key, value, f64),
            "terminal_tolerance" => self.terminal_tolerance = parse_key!(key, value, f64),
            "penalty_weight" => self.penalty_weight = parse_key!(key, value, f64),
            "activation_time" => self.activation_time = Some(parse_key!(key, value, usize)),
            "terminal_bonus" => self.terminal_bonus = parse_key!(key, value, f64),
            "forecast_len" => self.forecast_len = parse_key!(key, value, usize),
            "initial_level" => self.initial_level = parse_key!(key, value, f64),

            "price_file" => self.price_file = Some(value.to_string()),
            "price_seed" => self.price_seed = parse_key!(key, value, u64),
            "price_base" => self.price_base = parse_key!(key, value, f64),
            "price_amplitude" => self.price_amplitude = parse_key!(key, value, f64),
            "price_noise_std" => self.price_noise_std = parse_key!(key, value, f64),

            "gamma" => self.gamma = parse_key!(key, value, f64),
            "tau" => self.tau = parse_key!(key, value, f64),
            "noise_std" => self.noise_std = parse_key!(key, value, f64),
            "batch_size" => self.batch_size = parse_key!(key, value, usize),
            "learning_starts" => self.learning_starts = parse_key!(key, value, usize),
            "actor_lr" => self.actor_lr = parse_key!(key, value, f64),
            "critic_lr" => self.critic_lr = parse_key!(key, value, f64),
            "hidden1" => self.hidden1 = parse_key!(key, value, usize),
            "hidden2" => self.hidden2 = parse_key!(key, value, usize),
            "buffer_capacity" => self.buffer_capacity = parse_key!(key, value, usize),

            "levels" => self.levels = parse_key!(key, value, usize),
            "periods" => self.periods = parse_key!(key, value, usize),
            "membership_tol_factor" => self.membership_tol_factor = parse_key!(key, value, f64),
            "nearby_radius" => self.nearby_radius = parse_key!(key, value, usize),
            "model_train_steps" => self.model_train_steps = parse_key!(key, value, usize),
            "model_batch" => self.model_batch = parse_key!(key, value, usize),
            "model_lr" => self.model_lr = parse_key!(key, value, f64),
            "offline_pretrain_episodes" => {
                self.offline_pretrain_episodes = parse_key!(key, value, usize)
            }
            "offline_model_train_steps" => {
                self.offline_model_train_steps = parse_key!(key, value, usize)
            }

            "threshold_fraction" => self.threshold_fraction = parse_key!(key, value, f64),
            "smoothing_window" => self.smoothing_window = parse_key!(key, value, usize),

            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Applies `key=value` strings from the command line.
    pub fn apply_overrides(&mut self, overrides: &[String]) -> Result<()> {
        for item in overrides {
            let (key, value) = item.split_once('=').ok_or_else(|| {
                Error::Config(format!("override `{item}` is not of the form key=value"))
            })?;
            self.apply_kv(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 {
            return Err(Error::Validation("episodes must be at least 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Validation("seeds must be nonempty".into()));
        }
        if !(0.0..=self.tank_capacity).contains(&self.initial_level) {
            return Err(Error::Validation(
                "initial_level must lie in [0, tank_capacity]".into(),
            ));
        }
        if self.price_amplitude >= self.price_base && self.price_file.is_none() {
            return Err(Error::Validation(
                "price_amplitude must stay below price_base".into(),
            ));
        }
        if !(self.threshold_fraction > 0.0 && self.threshold_fraction <= 1.0) {
            return Err(Error::Validation(
                "threshold_fraction must be in (0, 1]".into(),
            ));
        }
        if self.smoothing_window == 0 {
            return Err(Error::Validation("smoothing_window must be positive".into()));
        }
        if self.model_batch == 0 || self.model_train_steps == 0 {
            return Err(Error::Validation(
                "model_batch and model_train_steps must be positive".into(),
            ));
        }
        if self.algorithm == Algorithm::GspOffline && self.offline_pretrain_episodes == 0 {
            return Err(Error::Validation(
                "gsp_offline needs offline_pretrain_episodes >= 1".into(),
            ));
        }
        self.env_params().validate()?;
        self.agent_config().validate()?;
        if self.algorithm.uses_goal_space() {
            self.goal_grid()?;
        }
        Ok(())
    }

    pub fn env_params(&self) -> EnvParams {
        EnvParams {
            horizon_steps: self.horizon,
            dt: self.dt,
            tank_capacity: self.tank_capacity,
            demand: self.demand,
            u_min: self.u_min,
            u_max: self.u_max,
            tracking_lag: self.tracking_lag,
            power_fixed: self.power_c0,
            power_per_production: self.power_c1,
            power_per_liquefaction: self.power_c2,
            terminal_target: self.terminal_target,
            terminal_tolerance: self.terminal_tolerance,
            penalty_weight: self.penalty_weight,
            activation_time: self
                .activation_time
                .unwrap_or_else(|| self.horizon.saturating_sub(4)),
            terminal_bonus: self.terminal_bonus,
            forecast_len: self.forecast_len,
        }
    }

    pub fn agent_config(&self) -> AgentConfig {
        AgentConfig {
            gamma: self.gamma,
            tau: self.tau,
            noise_std: self.noise_std,
            batch_size: self.batch_size,
            learning_starts: self.learning_starts,
            actor_lr: self.actor_lr,
            critic_lr: self.critic_lr,
            hidden: (self.hidden1, self.hidden2),
            buffer_capacity: self.buffer_capacity,
        }
    }

    pub fn goal_grid(&self) -> Result<GoalGrid> {
        Ok(GoalGrid::new(self.levels, self.periods, self.tank_capacity, self.horizon)?
            .with_membership_tol_factor(self.membership_tol_factor)?
            .with_nearby_radius(self.nearby_radius))
    }

    pub fn model_train_config(&self) -> ModelTrainConfig {
        ModelTrainConfig {
            steps: self.model_train_steps,
            batch_size: self.model_batch,
            learning_rate: self.model_lr,
        }
    }

    /// Resolves the price profile: loads `price_file` when set, otherwise
    /// generates the deterministic day-night profile.
    pub fn price_profile(&self) -> Result<PriceProfile> {
        match &self.price_file {
            Some(path) => {
                let profile = env::load_price_profile(Path::new(path))?;
                if profile.len() < self.horizon {
                    return Err(Error::Config(format!(
                        "price file `{path}` has {} entries, horizon needs {}",
                        profile.len(),
                        self.horizon
                    )));
                }
                Ok(profile)
            }
            None => Ok(env::generate_price_profile(
                self.price_seed,
                self.horizon,
                self.price_base,
                self.price_amplitude,
                self.price_noise_std,
            )),
        }
    }
}
