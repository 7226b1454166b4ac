//! Quantization of (storage level x time period) into subgoals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One abstract goal: a storage band within a time period. Periods are
/// 0-based; period 0 is the initial period and never hosts goals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Subgoal {
    pub period: usize,
    pub level: usize,
}

/// Uniform grid over storage levels and time periods, with membership and
/// nearby-goal queries. Goals are disjoint in storage at any fixed time
/// because the membership tolerance stays below half the level spacing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalGrid {
    num_levels: usize,
    num_periods: usize,
    capacity: f64,
    horizon: usize,
    level_centers: Vec<f64>,
    /// `num_periods + 1` boundaries; period `q` covers steps
    /// `[bounds[q], bounds[q+1])`, with the final period also owning the
    /// horizon step itself.
    period_bounds: Vec<usize>,
    membership_tol: f64,
    nearby_radius: usize,
}

impl GoalGrid {
    pub fn new(num_levels: usize, num_periods: usize, capacity: f64, horizon: usize) -> Result<Self> {
        if num_levels < 2 {
            return Err(Error::Validation("need at least 2 storage levels".into()));
        }
        if num_periods < 2 {
            return Err(Error::Validation("need at least 2 time periods".into()));
        }
        if horizon < num_periods {
            return Err(Error::Validation(
                "horizon must provide at least one step per period".into(),
            ));
        }
        if !(capacity > 0.0) {
            return Err(Error::Validation("capacity must be positive".into()));
        }
        let spacing = capacity / num_levels as f64;
        let level_centers = (0..num_levels)
            .map(|i| (i as f64 + 0.5) * spacing)
            .collect();
        let period_bounds = (0..=num_periods).map(|q| q * horizon / num_periods).collect();
        Ok(GoalGrid {
            num_levels,
            num_periods,
            capacity,
            horizon,
            level_centers,
            period_bounds,
            membership_tol: 0.4 * spacing,
            nearby_radius: 5,
        })
    }

    /// Sets the membership tolerance as a fraction of the level spacing.
    /// Must stay below 0.5 so membership is a function.
    pub fn with_membership_tol_factor(mut self, factor: f64) -> Result<Self> {
        if !(factor > 0.0 && factor < 0.5) {
            return Err(Error::Validation(
                "membership tolerance factor must be in (0, 0.5)".into(),
            ));
        }
        self.membership_tol = factor * self.level_spacing();
        Ok(self)
    }

    /// Sets the level-index radius used when collecting nearby goals.
    pub fn with_nearby_radius(mut self, radius: usize) -> Self {
        self.nearby_radius = radius;
        self
    }

    pub fn num_levels(&self) -> usize {
        self.num_levels
    }

    pub fn num_periods(&self) -> usize {
        self.num_periods
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn capacity(&self) -> f64 {
        self.capacity
    }

    pub fn nearby_radius(&self) -> usize {
        self.nearby_radius
    }

    pub fn membership_tol(&self) -> f64 {
        self.membership_tol
    }

    pub fn level_spacing(&self) -> f64 {
        self.capacity / self.num_levels as f64
    }

    pub fn level_center(&self, level: usize) -> f64 {
        self.level_centers[level]
    }

    /// First period that hosts goals.
    pub fn first_goal_period(&self) -> usize {
        1
    }

    pub fn terminal_period(&self) -> usize {
        self.num_periods - 1
    }

    /// Total goal count: levels times periods, excluding the initial period.
    pub fn num_goals(&self) -> usize {
        self.num_levels * (self.num_periods - 1)
    }

    /// Period containing step `t`; the horizon step belongs to the final
    /// period.
    pub fn period_of(&self, t: usize) -> usize {
        if t >= self.horizon {
            return self.terminal_period();
        }
        self.period_bounds.partition_point(|&b| b <= t) - 1
    }

    pub fn period_range(&self, q: usize) -> (usize, usize) {
        (self.period_bounds[q], self.period_bounds[q + 1])
    }

    /// Index of the level center closest to the given storage value.
    pub fn nearest_level(&self, storage: f64) -> usize {
        let raw = (storage / self.level_spacing() - 0.5).round() as i64;
        raw.clamp(0, self.num_levels as i64 - 1) as usize
    }

    /// The unique goal a state belongs to, if any: its period must not be the
    /// initial one and its storage must be within tolerance of a level center.
    pub fn membership(&self, storage: f64, t: usize) -> Option<Subgoal> {
        let period = self.period_of(t);
        if period < self.first_goal_period() {
            return None;
        }
        let level = self.nearest_level(storage);
        if (storage - self.level_centers[level]).abs() <= self.membership_tol {
            Some(Subgoal { period, level })
        } else {
            None
        }
    }

    /// Normalized (level, period) coordinates used as model inputs.
    pub fn goal_coords(&self, g: Subgoal) -> (f64, f64) {
        (
            self.level_centers[g.level] / self.capacity,
            g.period as f64 / (self.num_periods - 1) as f64,
        )
    }
}
