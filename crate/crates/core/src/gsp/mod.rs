//! Goal-space planning: a coarse (storage level x time period) goal grid, a
//! trajectory-derived goal-transition DAG with two-stage pruning and exact
//! value iteration, learned state-to-goal models, and the potential-based
//! reward shaping that feeds the resulting values back to the base agent.

pub mod extract;
pub mod graph;
pub mod grid;
pub mod models;

pub use extract::{extract_goal_transitions, EpisodeTrace, Extraction, GoalTransition, StateGoalSample};
pub use graph::{normalize_per_period, EdgeStats, GoalGraph, NodeStats, PruneReport};
pub use grid::{GoalGrid, Subgoal};
pub use models::{
    lookup_value, model_input, project_value, train_state_goal_models, ModelTrainConfig,
    StateGoalModel, TrainReport,
};

/// Potential-difference reward shaping. The potential of terminal successors
/// is zero by convention (the caller passes 0), so shaping telescopes over a
/// finite episode without shifting the optimal policy.
pub fn shape_reward(reward: f64, potential: f64, next_potential: f64, gamma: f64) -> f64 {
    reward + gamma * next_potential - potential
}
