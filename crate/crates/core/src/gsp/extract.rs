//! Turning raw episode traces into goal-space training data: goal-to-goal
//! transition records for the graph and state-to-goal samples for the
//! two-head model.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gsp::grid::{GoalGrid, Subgoal};

/// One complete episode as seen by the goal-space layer: the feature vector
/// and storage level of every visited state plus the per-step rewards.
///
/// `terminal_reward` is the terminal-bonus component of the last reward. It
/// is excluded from edge and sample aggregation and credited to the terminal
/// node instead, so value iteration counts it exactly once.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub features: Vec<Vec<f64>>,
    pub storages: Vec<f64>,
    pub rewards: Vec<f64>,
    pub terminal_reward: f64,
}

impl EpisodeTrace {
    /// Number of steps (one less than the number of states).
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.rewards.is_empty() {
            return Err(Error::Validation("episode trace has no steps".into()));
        }
        if self.features.len() != self.rewards.len() + 1
            || self.storages.len() != self.features.len()
        {
            return Err(Error::Shape(
                "trace needs one more state than rewards, with aligned storages".into(),
            ));
        }
        Ok(())
    }
}

/// Aggregated transition between goals in adjacent periods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalTransition {
    pub from: Subgoal,
    pub to: Subgoal,
    /// Discounted reward accumulated between the two membership events.
    pub discounted_return: f64,
    /// `gamma^h` for the `h` steps between the events.
    pub discount: f64,
}

/// Supervised sample for the state-to-goal model: from a concrete state to
/// the next goal achieved one period later.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateGoalSample {
    pub features: Vec<f64>,
    pub goal: Subgoal,
    pub discounted_return: f64,
    /// Exactly `gamma^steps`.
    pub discount: f64,
    pub steps: usize,
}

/// Everything one episode contributes to the goal-space models.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Extraction {
    pub transitions: Vec<GoalTransition>,
    pub samples: Vec<StateGoalSample>,
    /// Goal the episode ended in (if the final state has a membership),
    /// paired with the observed terminal reward component.
    pub terminal_node: Option<(Subgoal, f64)>,
}

/// Horner evaluation of `sum_k gamma^k r_k`.
fn discounted_sum(rewards: &[f64], gamma: f64) -> f64 {
    rewards.iter().rev().fold(0.0, |acc, r| r + gamma * acc)
}

/// Scans a complete episode for goal membership events and emits:
/// goal-to-goal records between consecutive events in adjacent periods,
/// one state-to-goal sample per in-period state targeting the first goal
/// achieved in the following period, and the terminal-node observation.
pub fn extract_goal_transitions(
    trace: &EpisodeTrace,
    grid: &GoalGrid,
    gamma: f64,
) -> Result<Extraction> {
    trace.validate()?;
    let n = trace.len();

    // terminal bonus is handled through node seeding, not edge rewards
    let mut rewards = trace.rewards.clone();
    *rewards.last_mut().unwrap() -= trace.terminal_reward;

    let events: Vec<(usize, Subgoal)> = (0..=n)
        .filter_map(|t| grid.membership(trace.storages[t], t).map(|g| (t, g)))
        .collect();

    let mut transitions = Vec::new();
    for pair in events.windows(2) {
        let (i, from) = pair[0];
        let (j, to) = pair[1];
        if to.period == from.period + 1 {
            transitions.push(GoalTransition {
                from,
                to,
                discounted_return: discounted_sum(&rewards[i..j], gamma),
                discount: gamma.powi((j - i) as i32),
            });
        }
    }

    // first membership event of each period
    let mut first_event: std::collections::BTreeMap<usize, (usize, Subgoal)> =
        std::collections::BTreeMap::new();
    for &(t, g) in &events {
        first_event.entry(g.period).or_insert((t, g));
    }

    let mut samples = Vec::new();
    for t in 0..n {
        let q = grid.period_of(t);
        if let Some(&(j, goal)) = first_event.get(&(q + 1)) {
            debug_assert!(j > t, "period windows are ordered");
            samples.push(StateGoalSample {
                features: trace.features[t].clone(),
                goal,
                discounted_return: discounted_sum(&rewards[t..j], gamma),
                discount: gamma.powi((j - t) as i32),
                steps: j - t,
            });
        }
    }

    let terminal_node = grid
        .membership(trace.storages[n], n)
        .map(|g| (g, trace.terminal_reward));

    Ok(Extraction {
        transitions,
        samples,
        terminal_node,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// 12-step horizon, 4 periods (bounds 0,3,6,9,12), 5 levels of 0.2.
    fn grid() -> GoalGrid {
        GoalGrid::new(5, 4, 1.0, 12).unwrap()
    }

    /// Trace whose storage sits exactly on level centers at the given steps
    /// and far from any center elsewhere.
    fn trace_with_events(events: &[(usize, usize)], rewards: Vec<f64>) -> EpisodeTrace {
        let g = grid();
        let n = rewards.len();
        let mut storages = vec![0.99; n + 1]; // off-center for 5 levels of 0.2
        for &(t, level) in events {
            storages[t] = g.level_center(level);
        }
        EpisodeTrace {
            features: storages.iter().map(|s| vec![*s]).collect(),
            storages,
            rewards,
            terminal_reward: 0.0,
        }
    }

    #[test]
    fn undiscounted_three_step_crossing() {
        // membership at t=3 (period 1) and t=6 (period 2), three unit rewards
        let tr = trace_with_events(&[(3, 1), (6, 2)], vec![1.0; 12]);
        let ex = extract_goal_transitions(&tr, &grid(), 1.0).unwrap();
        assert_eq!(ex.transitions.len(), 1);
        let t0 = &ex.transitions[0];
        assert_eq!(t0.discounted_return, 3.0);
        assert_eq!(t0.discount, 1.0);
        assert_eq!(t0.from, Subgoal { period: 1, level: 1 });
        assert_eq!(t0.to, Subgoal { period: 2, level: 2 });
    }

    #[test]
    fn single_step_crossing_discounts_once() {
        // membership at t=5 (period 1) and t=6 (period 2), reward 2 between
        let mut rewards = vec![0.0; 12];
        rewards[5] = 2.0;
        let tr = trace_with_events(&[(5, 1), (6, 2)], rewards);
        let ex = extract_goal_transitions(&tr, &grid(), 0.99).unwrap();
        let t0 = &ex.transitions[0];
        assert!((t0.discounted_return - 2.0).abs() < 1e-12);
        assert_eq!(t0.discount, 0.99);
    }

    #[test]
    fn two_step_crossing_hand_values() {
        // rewards [1, 1] over the crossing: 1 + 0.99 = 1.99, 0.99^2 = 0.9801
        let mut rewards = vec![0.0; 12];
        rewards[4] = 1.0;
        rewards[5] = 1.0;
        let tr = trace_with_events(&[(4, 1), (6, 2)], rewards);
        let ex = extract_goal_transitions(&tr, &grid(), 0.99).unwrap();
        let t0 = &ex.transitions[0];
        assert!((t0.discounted_return - 1.99).abs() < 1e-12);
        assert!((t0.discount - 0.9801).abs() < 1e-12);
    }

    #[test]
    fn same_period_events_do_not_emit_edges() {
        // two events inside period 1, then one in period 2: exactly one edge,
        // anchored at the later period-1 event
        let tr = trace_with_events(&[(3, 1), (4, 2), (6, 3)], vec![1.0; 12]);
        let ex = extract_goal_transitions(&tr, &grid(), 1.0).unwrap();
        assert_eq!(ex.transitions.len(), 1);
        assert_eq!(ex.transitions[0].from, Subgoal { period: 1, level: 2 });
        assert_eq!(ex.transitions[0].discounted_return, 2.0);
    }

    #[test]
    fn period_gaps_emit_nothing() {
        // events in periods 1 and 3 only; the gap forbids an edge
        let tr = trace_with_events(&[(3, 1), (9, 2)], vec![1.0; 12]);
        let ex = extract_goal_transitions(&tr, &grid(), 1.0).unwrap();
        assert!(ex.transitions.is_empty());
    }

    #[test]
    fn no_events_contribute_nothing() {
        let tr = trace_with_events(&[], vec![1.0; 12]);
        let ex = extract_goal_transitions(&tr, &grid(), 1.0).unwrap();
        assert!(ex.transitions.is_empty());
        assert!(ex.samples.is_empty());
        assert!(ex.terminal_node.is_none());
    }

    #[test]
    fn samples_target_first_next_period_goal() {
        // events at t=6 and t=7 both sit in period 2; the earlier one is the
        // target for every period-1 state
        let tr = trace_with_events(&[(6, 2), (7, 3)], vec![1.0; 12]);
        let ex = extract_goal_transitions(&tr, &grid(), 0.99).unwrap();
        assert_eq!(ex.samples.len(), 3); // states t = 3, 4, 5
        for s in &ex.samples {
            assert_eq!(s.goal, Subgoal { period: 2, level: 2 });
            assert_eq!(s.discount, 0.99f64.powi(s.steps as i32));
        }
        assert!(ex.samples.iter().any(|s| s.steps == 3));
    }

    #[test]
    fn initial_period_states_get_samples() {
        let tr = trace_with_events(&[(4, 1)], vec![1.0; 12]);
        let ex = extract_goal_transitions(&tr, &grid(), 1.0).unwrap();
        // states t=0..2 live in period 0 and target the period-1 event at t=4
        assert_eq!(ex.samples.len(), 3);
        assert!(ex.samples.iter().all(|s| s.goal.period == 1));
        assert!(ex.samples.iter().any(|s| s.steps == 4));
    }

    #[test]
    fn terminal_membership_and_bonus_split() {
        let g = grid();
        let mut tr = trace_with_events(&[(6, 1), (12, 3)], vec![1.0; 12]);
        tr.terminal_reward = 5.0;
        let ex = extract_goal_transitions(&tr, &g, 1.0).unwrap();
        let (node, bonus) = ex.terminal_node.unwrap();
        assert_eq!(node, Subgoal { period: 3, level: 3 });
        assert_eq!(bonus, 5.0);
        // the edge into the terminal goal must not double count the bonus:
        // rewards 6..12 sum to 6, minus the excluded bonus of 5
        let edge = &ex.transitions[0];
        assert_eq!(edge.from.period, 2);
        assert_eq!(edge.to.period, 3);
        assert_eq!(edge.discounted_return, 1.0);
    }
}
