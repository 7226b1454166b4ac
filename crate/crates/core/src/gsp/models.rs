//! State-to-goal models: a shared-body two-head net regressing the
//! discounted return and discount from a concrete state to a nearby subgoal,
//! plus the projected-value potential that combines those heads with the
//! graph's subgoal values.

use rand::rngs::StdRng;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gsp::extract::StateGoalSample;
use crate::gsp::graph::GoalGraph;
use crate::gsp::grid::{GoalGrid, Subgoal};
use crate::nn::{two_head_adam_step, TwoHeadAdam, TwoHeadCache, TwoHeadGrads, TwoHeadNet};

/// Training budget for one (re)fit of the state-to-goal heads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelTrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for ModelTrainConfig {
    fn default() -> Self {
        ModelTrainConfig {
            steps: 150,
            batch_size: 64,
            learning_rate: 1e-3,
        }
    }
}

/// Two-head net plus its optimizer state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateGoalModel {
    pub net: TwoHeadNet,
    pub opt: TwoHeadAdam,
}

impl StateGoalModel {
    pub fn new(state_dim: usize, hidden: (usize, usize), learning_rate: f64, rng: &mut StdRng) -> Self {
        let net = TwoHeadNet::new(state_dim + 2, hidden, rng);
        let opt = TwoHeadAdam::new(learning_rate, &net);
        StateGoalModel { net, opt }
    }
}

/// Model input: state features concatenated with normalized goal coordinates.
pub fn model_input(features: &[f64], goal: Subgoal, grid: &GoalGrid) -> Vec<f64> {
    let mut v = Vec::with_capacity(features.len() + 2);
    v.extend_from_slice(features);
    let (level, period) = grid.goal_coords(goal);
    v.push(level);
    v.push(period);
    v
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainReport {
    pub final_loss: f64,
    pub batches_skipped: usize,
}

/// Minibatch Adam on the summed squared errors of both heads. Batches with a
/// non-finite loss are skipped and counted rather than applied.
pub fn train_state_goal_models(
    samples: &[&StateGoalSample],
    model: &mut StateGoalModel,
    grid: &GoalGrid,
    cfg: &ModelTrainConfig,
    rng: &mut StdRng,
) -> Result<TrainReport> {
    if samples.is_empty() {
        return Err(Error::Validation("no state-to-goal samples to train on".into()));
    }
    let batch = cfg.batch_size.max(1).min(samples.len());
    let mut cache = TwoHeadCache::default();
    let mut grads = TwoHeadGrads::zeros_like(&model.net);
    let mut report = TrainReport {
        final_loss: f64::NAN,
        batches_skipped: 0,
    };
    for _ in 0..cfg.steps {
        grads.zero();
        let mut loss = 0.0;
        for _ in 0..batch {
            let s = samples[rng.gen_range(0..samples.len())];
            let input = model_input(&s.features, s.goal, grid);
            let (r_hat, g_hat) = model.net.forward_cached(&input, &mut cache)?;
            let er = r_hat - s.discounted_return;
            let eg = g_hat - s.discount;
            loss += er * er + eg * eg;
            model.net.backward_accumulate(
                &input,
                &mut cache,
                2.0 * er / batch as f64,
                2.0 * eg / batch as f64,
                &mut grads,
            );
        }
        loss /= batch as f64;
        if !loss.is_finite() {
            report.batches_skipped += 1;
            continue;
        }
        match two_head_adam_step(&mut model.net, &grads, &mut model.opt) {
            Ok(()) => report.final_loss = loss,
            Err(Error::Numeric(_)) => report.batches_skipped += 1,
            Err(e) => return Err(e),
        }
    }
    Ok(report)
}

/// Projected subgoal value: over surviving goals in the period right after
/// the state's, within the grid's level radius of the state's nearest level,
/// take the best `r(x,g) + G(x,g) * v(g)`. Falls back to zero when no such
/// goal survives (including states already in the terminal period).
pub fn project_value(
    features: &[f64],
    storage: f64,
    t: usize,
    grid: &GoalGrid,
    graph: &GoalGraph,
    net: &TwoHeadNet,
) -> f64 {
    let target_period = grid.period_of(t) + 1;
    if target_period > grid.terminal_period() {
        return 0.0;
    }
    let center = grid.nearest_level(storage) as i64;
    let radius = grid.nearby_radius() as i64;
    let lo = (center - radius).max(0) as usize;
    let hi = ((center + radius) as usize).min(grid.num_levels() - 1);
    let mut best = f64::NEG_INFINITY;
    let mut found = false;
    for level in lo..=hi {
        let goal = Subgoal {
            period: target_period,
            level,
        };
        let Some(value) = graph.value(goal) else {
            continue;
        };
        let input = model_input(features, goal, grid);
        let (r_hat, g_hat) = net.forward(&input).expect("model input dim fixed");
        let projected = r_hat + g_hat * value;
        if projected > best {
            best = projected;
            found = true;
        }
    }
    if found {
        best
    } else {
        0.0
    }
}

/// Ablated potential: the plain table value of the goal the state belongs to,
/// zero when it belongs to none.
pub fn lookup_value(storage: f64, t: usize, grid: &GoalGrid, graph: &GoalGraph) -> f64 {
    grid.membership(storage, t)
        .and_then(|g| graph.value(g))
        .unwrap_or(0.0)
}
