//! Surrogate demand-response plant: a production unit that liquefies excess
//! output into a storage tank, pays time-varying electricity prices, and must
//! finish the horizon with the tank at or near a target level.
//!
//! The plant model is deliberately small: a first-order lag tracks the agent's
//! production setpoint, storage follows an exact mass balance, and demand is
//! always met by evaporating from the tank whenever production falls short.
//! All state is value-semantic; stepping never mutates shared data, so
//! independent rollouts can run concurrently on plain clones.

use std::path::Path;

use rand::rngs::StdRng;
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical and reward parameters of the surrogate plant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvParams {
    /// Episode length in steps (hours at `dt = 1`).
    pub horizon_steps: usize,
    /// Step length in hours.
    pub dt: f64,
    /// Tank capacity in normalized mol units.
    pub tank_capacity: f64,
    /// Constant product demand in mol/h.
    pub demand: f64,
    /// Lower production setpoint bound, mol/h.
    pub u_min: f64,
    /// Upper production setpoint bound, mol/h.
    pub u_max: f64,
    /// First-order setpoint tracking coefficient in (0, 1]; stands in for the
    /// low-level tracking controller of the full plant.
    pub tracking_lag: f64,
    /// Fixed power draw, kW per unit flow scale.
    pub power_fixed: f64,
    /// Power per unit of production flow.
    pub power_per_production: f64,
    /// Extra power per unit of liquefied flow.
    pub power_per_liquefaction: f64,
    /// Required end-of-horizon storage level, mol.
    pub terminal_target: f64,
    /// Band below the target that still counts as satisfied, mol.
    pub terminal_tolerance: f64,
    /// Quadratic penalty weight on storage shortfall after `activation_time`.
    pub penalty_weight: f64,
    /// Step index after which the shortfall penalty is active.
    pub activation_time: usize,
    /// Reward granted when the final storage satisfies the constraint.
    pub terminal_bonus: f64,
    /// Number of future prices in the observation.
    pub forecast_len: usize,
}

impl Default for EnvParams {
    fn default() -> Self {
        EnvParams {
            horizon_steps: 72,
            dt: 1.0,
            tank_capacity: 1.0,
            demand: 0.3,
            u_min: 0.05,
            u_max: 0.55,
            tracking_lag: 0.7,
            power_fixed: 0.2,
            power_per_production: 1.0,
            power_per_liquefaction: 0.6,
            terminal_target: 0.7,
            terminal_tolerance: 0.05,
            penalty_weight: 10.0,
            activation_time: 68,
            terminal_bonus: 20.0,
            forecast_len: 12,
        }
    }
}

impl EnvParams {
    pub fn validate(&self) -> Result<()> {
        if self.horizon_steps == 0 {
            return Err(Error::Validation("horizon_steps must be positive".into()));
        }
        if !(self.dt > 0.0) {
            return Err(Error::Validation("dt must be positive".into()));
        }
        if !(self.tank_capacity > 0.0) {
            return Err(Error::Validation("tank_capacity must be positive".into()));
        }
        if !(self.demand > 0.0) {
            return Err(Error::Validation("demand must be positive".into()));
        }
        if !(0.0 < self.u_min && self.u_min < self.u_max) {
            return Err(Error::Validation("need 0 < u_min < u_max".into()));
        }
        if !(self.tracking_lag > 0.0 && self.tracking_lag <= 1.0) {
            return Err(Error::Validation("tracking_lag must be in (0, 1]".into()));
        }
        if !(0.0..=self.tank_capacity).contains(&self.terminal_target) {
            return Err(Error::Validation(
                "terminal_target must lie in [0, tank_capacity]".into(),
            ));
        }
        if !(self.terminal_tolerance >= 0.0) {
            return Err(Error::Validation("terminal_tolerance must be >= 0".into()));
        }
        if !(self.penalty_weight > 0.0) {
            return Err(Error::Validation("penalty_weight must be positive".into()));
        }
        if self.activation_time >= self.horizon_steps {
            return Err(Error::Validation(
                "activation_time must be before the horizon end".into(),
            ));
        }
        if self.forecast_len == 0 {
            return Err(Error::Validation("forecast_len must be positive".into()));
        }
        Ok(())
    }

    /// Observation dimensionality: storage, production, time-of-day, forecast.
    pub fn state_dim(&self) -> usize {
        3 + self.forecast_len
    }
}

/// Observable plant state at one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    /// Storage holdup in mol, always within `[0, tank_capacity]`.
    pub tank_level: f64,
    /// Realized production rate in mol/h (lags the setpoint).
    pub production: f64,
    /// Step index in `0..=horizon_steps`.
    pub step: usize,
    /// Hours into the day, in `[0, 24)`.
    pub time_of_day: f64,
    /// Upcoming prices, padded with the last known price near the horizon end.
    pub price_forecast: Vec<f64>,
}

impl EnvState {
    /// Feature vector layout: `[tank_level, production, time_of_day / 24,
    /// forecast...]`. Component 0 is the storage level; goal-space code relies
    /// on that via [`storage_from_features`].
    pub fn to_features(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(3 + self.price_forecast.len());
        v.push(self.tank_level);
        v.push(self.production);
        v.push(self.time_of_day / 24.0);
        v.extend_from_slice(&self.price_forecast);
        v
    }
}

/// Reads the storage level back out of a feature vector.
pub fn storage_from_features(features: &[f64]) -> f64 {
    features[0]
}

/// Hourly electricity prices covering at least the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceProfile {
    pub prices: Vec<f64>,
}

impl PriceProfile {
    pub fn new(prices: Vec<f64>) -> Result<Self> {
        if prices.is_empty() {
            return Err(Error::Validation("price profile is empty".into()));
        }
        if let Some(i) = prices.iter().position(|p| *p < 0.0 || !p.is_finite()) {
            return Err(Error::Validation(format!(
                "price at index {i} is negative or non-finite"
            )));
        }
        Ok(PriceProfile { prices })
    }

    pub fn len(&self) -> usize {
        self.prices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }
}

/// Reward split for one transition; `total` is always the exact sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    /// Electricity cost, <= 0.
    pub elec: f64,
    /// Storage shortfall penalty, <= 0.
    pub path: f64,
    /// Terminal constraint bonus, >= 0.
    pub terminal: f64,
    pub total: f64,
}

impl RewardBreakdown {
    pub fn new(elec: f64, path: f64, terminal: f64) -> Self {
        RewardBreakdown {
            elec,
            path,
            terminal,
            total: elec + path + terminal,
        }
    }
}

/// Result of one environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: EnvState,
    pub reward: RewardBreakdown,
    pub done: bool,
    /// Set when the tank ran dry while production was below demand; demand is
    /// then not fully met for part of the step. The dynamics clamp rather
    /// than fault, but callers may want to count these.
    pub demand_shortfall: bool,
}

fn forecast_window(profile: &PriceProfile, t: usize, len: usize) -> Vec<f64> {
    let last = *profile.prices.last().expect("profile validated nonempty");
    (t..t + len)
        .map(|i| profile.prices.get(i).copied().unwrap_or(last))
        .collect()
}

/// Starts a fresh episode at the given storage level.
pub fn reset(params: &EnvParams, profile: &PriceProfile, initial_level: f64) -> Result<EnvState> {
    params.validate()?;
    if profile.len() < params.horizon_steps {
        return Err(Error::Config(format!(
            "price profile has {} entries but the horizon needs {}",
            profile.len(),
            params.horizon_steps
        )));
    }
    if !(0.0..=params.tank_capacity).contains(&initial_level) {
        return Err(Error::Validation(format!(
            "initial level {initial_level} outside [0, {}]",
            params.tank_capacity
        )));
    }
    Ok(EnvState {
        tank_level: initial_level,
        production: params.demand,
        step: 0,
        time_of_day: 0.0,
        price_forecast: forecast_window(profile, 0, params.forecast_len),
    })
}

/// Share of production routed to storage: positive only when production
/// exceeds demand, and chosen so production plus evaporation always meets
/// demand.
pub fn liquefied_fraction(production: f64, demand: f64) -> f64 {
    if production > demand {
        1.0 - demand / production
    } else {
        0.0
    }
}

/// Quadratic storage-shortfall penalty, active only after `activation_time`.
/// Returns a non-positive reward contribution.
pub fn path_penalty(state: &EnvState, params: &EnvParams) -> f64 {
    let shortfall = params.terminal_target - state.tank_level;
    if shortfall > 0.0 && state.step > params.activation_time {
        -params.penalty_weight * shortfall * shortfall
    } else {
        0.0
    }
}

/// Whether a final storage level meets the terminal constraint (at or above
/// the target, or within tolerance below it).
pub fn terminal_satisfied(level: f64, params: &EnvParams) -> bool {
    level >= params.terminal_target - params.terminal_tolerance
}

/// Advances the plant one step under the given (clamped) setpoint.
///
/// Production tracks the setpoint with a first-order lag; excess production is
/// liquefied into the tank while shortfall evaporates from it, so demand is
/// met whenever the tank is not empty. The reward combines the electricity
/// cost of the step, the shortfall penalty evaluated at the successor state,
/// and the terminal bonus on the last step.
pub fn step(
    state: &EnvState,
    setpoint: f64,
    params: &EnvParams,
    profile: &PriceProfile,
) -> Result<StepOutcome> {
    if state.step >= params.horizon_steps {
        return Err(Error::Usage("step called on a finished episode".into()));
    }
    let u = setpoint.clamp(params.u_min, params.u_max);
    let production = state.production + params.tracking_lag * (u - state.production);
    let xi = liquefied_fraction(production, params.demand);
    let liquefied = xi * production;
    let evaporation = (params.demand - production).max(0.0);
    let raw_level = state.tank_level + (liquefied - evaporation) * params.dt;
    let tank_level = raw_level.clamp(0.0, params.tank_capacity);
    let demand_shortfall = raw_level < 0.0;

    let t_next = state.step + 1;
    let next = EnvState {
        tank_level,
        production,
        step: t_next,
        time_of_day: (t_next as f64 * params.dt) % 24.0,
        price_forecast: forecast_window(profile, t_next, params.forecast_len),
    };

    let price = profile.prices[state.step];
    let power = params.power_fixed
        + params.power_per_production * production
        + params.power_per_liquefaction * liquefied;
    let elec = -price * power * params.dt;
    let path = path_penalty(&next, params);
    let done = t_next == params.horizon_steps;
    let terminal = if done && terminal_satisfied(tank_level, params) {
        params.terminal_bonus
    } else {
        0.0
    };

    Ok(StepOutcome {
        state: next,
        reward: RewardBreakdown::new(elec, path, terminal),
        done,
        demand_shortfall,
    })
}

/// Deterministic day-night price profile: a daily sinusoid around `base` with
/// Gaussian noise, clipped at zero. Assumes hourly steps. Callers should keep
/// `amplitude < base` so prices stay positive up to noise.
pub fn generate_price_profile(
    seed: u64,
    hours: usize,
    base: f64,
    amplitude: f64,
    noise_std: f64,
) -> PriceProfile {
    debug_assert!(amplitude <= base, "amplitude above base yields negative troughs");
    let mut rng = StdRng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_std).expect("noise_std must be >= 0");
    let prices = (0..hours)
        .map(|t| {
            let tod = (t % 24) as f64;
            let p = base
                + amplitude * (2.0 * std::f64::consts::PI * tod / 24.0).sin()
                + noise.sample(&mut rng);
            p.max(0.0)
        })
        .collect();
    PriceProfile { prices }
}

/// Loads a profile from a text file: either one non-negative number per line,
/// or CSV with a header containing a `price` column.
pub fn load_price_profile(path: &Path) -> Result<PriceProfile> {
    let text = std::fs::read_to_string(path)?;
    parse_price_profile(&text)
}

fn parse_price_profile(text: &str) -> Result<PriceProfile> {
    let mut prices = Vec::new();
    let mut price_col: Option<usize> = None;
    let mut saw_header = false;
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if prices.is_empty() && !saw_header && fields.iter().all(|f| f.parse::<f64>().is_err()) {
            // header row; locate the price column
            match fields.iter().position(|f| f.eq_ignore_ascii_case("price")) {
                Some(col) => {
                    price_col = Some(col);
                    saw_header = true;
                    continue;
                }
                None => {
                    return Err(Error::Parse {
                        line: lineno,
                        msg: "header has no `price` column".into(),
                    })
                }
            }
        }
        let col = price_col.unwrap_or(0);
        let field = fields.get(col).ok_or_else(|| Error::Parse {
            line: lineno,
            msg: format!("missing column {col}"),
        })?;
        let value: f64 = field.parse().map_err(|_| Error::Parse {
            line: lineno,
            msg: format!("`{field}` is not a number"),
        })?;
        if value < 0.0 {
            return Err(Error::Validation(format!(
                "negative price {value} on line {lineno}"
            )));
        }
        prices.push(value);
    }
    PriceProfile::new(prices)
}

/// Writes a profile in the CSV form accepted by [`load_price_profile`].
pub fn save_price_profile(profile: &PriceProfile, path: &Path) -> Result<()> {
    let mut out = String::from("price\n");
    for p in &profile.prices {
        out.push_str(&format!("{p}\n"));
    }
    std::fs::write(path, out)?;
    Ok(())
}
