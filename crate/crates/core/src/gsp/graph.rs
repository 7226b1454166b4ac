//! Directed acyclic graph over subgoals: edges carry running-mean discounted
//! returns and discounts, nodes carry values from one exact backward sweep of
//! value iteration. Edges only ever connect adjacent periods, so the graph is
//! layered and a single reverse-period sweep reaches the fixed point.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gsp::extract::{Extraction, GoalTransition};
use crate::gsp::grid::{GoalGrid, Subgoal};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EdgeStats {
    return_sum: f64,
    discount_sum: f64,
    pub count: u64,
}

impl EdgeStats {
    pub fn mean_return(&self) -> f64 {
        self.return_sum / self.count as f64
    }

    pub fn mean_discount(&self) -> f64 {
        self.discount_sum / self.count as f64
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NodeStats {
    /// Value from the last `value_iteration` call.
    pub value: f64,
    terminal_sum: f64,
    terminal_count: u64,
}

impl NodeStats {
    /// Mean observed terminal reward; zero when never observed.
    pub fn terminal_mean(&self) -> f64 {
        if self.terminal_count == 0 {
            0.0
        } else {
            self.terminal_sum / self.terminal_count as f64
        }
    }
}

/// Outcome of the two-stage prune.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PruneReport {
    pub removed_backward: usize,
    pub removed_forward: usize,
    pub is_empty: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GoalGraph {
    nodes: BTreeMap<Subgoal, NodeStats>,
    edges: BTreeMap<Subgoal, BTreeMap<Subgoal, EdgeStats>>,
}

impl GoalGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Folds whole-episode extractions into one graph.
    pub fn from_extractions<'a, I>(extractions: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a Extraction>,
    {
        let mut g = GoalGraph::new();
        for ex in extractions {
            for rec in &ex.transitions {
                g.add_transition(rec)?;
            }
            if let Some((node, reward)) = ex.terminal_node {
                g.add_terminal_observation(node, reward);
            }
        }
        Ok(g)
    }

    /// Accumulates one observed goal-to-goal transition into the running
    /// means. Rejects records that do not advance the period by exactly one.
    pub fn add_transition(&mut self, rec: &GoalTransition) -> Result<()> {
        if rec.to.period != rec.from.period + 1 {
            return Err(Error::Contract(format!(
                "goal transition must advance one period, got {} -> {}",
                rec.from.period, rec.to.period
            )));
        }
        if rec.from.period == 0 {
            return Err(Error::Contract("goals never live in the initial period".into()));
        }
        self.nodes.entry(rec.from).or_default();
        self.nodes.entry(rec.to).or_default();
        let e = self
            .edges
            .entry(rec.from)
            .or_default()
            .entry(rec.to)
            .or_default();
        e.return_sum += rec.discounted_return;
        e.discount_sum += rec.discount;
        e.count += 1;
        Ok(())
    }

    /// Records the terminal reward observed when an episode ended in `goal`.
    pub fn add_terminal_observation(&mut self, goal: Subgoal, reward: f64) {
        let n = self.nodes.entry(goal).or_default();
        n.terminal_sum += reward;
        n.terminal_count += 1;
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.values().map(|m| m.len()).sum()
    }

    pub fn contains(&self, g: Subgoal) -> bool {
        self.nodes.contains_key(&g)
    }

    /// Node value, if the node survived pruning.
    pub fn value(&self, g: Subgoal) -> Option<f64> {
        self.nodes.get(&g).map(|n| n.value)
    }

    pub fn nodes(&self) -> impl Iterator<Item = (&Subgoal, &NodeStats)> {
        self.nodes.iter()
    }

    pub fn successors(&self, g: Subgoal) -> Option<&BTreeMap<Subgoal, EdgeStats>> {
        self.edges.get(&g)
    }

    fn retain_nodes(&mut self, keep: &BTreeSet<Subgoal>) {
        self.nodes.retain(|g, _| keep.contains(g));
        self.edges.retain(|g, _| keep.contains(g));
        for targets in self.edges.values_mut() {
            targets.retain(|g, _| keep.contains(g));
        }
        self.edges.retain(|_, targets| !targets.is_empty());
    }

    /// Two-stage connectivity prune. A reverse breadth-first search from the
    /// terminal-period nodes drops everything that cannot reach the terminal
    /// set; a forward search from the surviving first-goal-period nodes then
    /// drops everything unreachable from the initial conditions. Afterwards
    /// every node lies on at least one complete path from the first goal
    /// period to the terminal period. An empty result is reported, not an
    /// error; planning is simply disabled until more data arrives.
    pub fn prune(&mut self, grid: &GoalGrid) -> PruneReport {
        let before_backward = self.node_count();

        // reverse adjacency for the backward stage
        let mut reverse: BTreeMap<Subgoal, Vec<Subgoal>> = BTreeMap::new();
        for (from, targets) in &self.edges {
            for to in targets.keys() {
                reverse.entry(*to).or_default().push(*from);
            }
        }
        let mut keep: BTreeSet<Subgoal> = self
            .nodes
            .keys()
            .copied()
            .filter(|g| g.period == grid.terminal_period())
            .collect();
        let mut queue: VecDeque<Subgoal> = keep.iter().copied().collect();
        while let Some(g) = queue.pop_front() {
            if let Some(preds) = reverse.get(&g) {
                for p in preds {
                    if keep.insert(*p) {
                        queue.push_back(*p);
                    }
                }
            }
        }
        self.retain_nodes(&keep);
        let after_backward = self.node_count();

        let mut keep: BTreeSet<Subgoal> = self
            .nodes
            .keys()
            .copied()
            .filter(|g| g.period == grid.first_goal_period())
            .collect();
        let mut queue: VecDeque<Subgoal> = keep.iter().copied().collect();
        while let Some(g) = queue.pop_front() {
            if let Some(targets) = self.edges.get(&g) {
                for t in targets.keys() {
                    if keep.insert(*t) {
                        queue.push_back(*t);
                    }
                }
            }
        }
        self.retain_nodes(&keep);

        PruneReport {
            removed_backward: before_backward - after_backward,
            removed_forward: after_backward - self.node_count(),
            is_empty: self.nodes.is_empty(),
        }
    }

    /// One exact backward sweep of `v(g) = max_{g'} [r(g,g') + G(g,g') v(g')]`
    /// in reverse period order. Terminal-period nodes are seeded with their
    /// mean observed terminal reward. Must run on a pruned graph; a
    /// non-terminal node without successors is a contract breach.
    pub fn value_iteration(&mut self, grid: &GoalGrid) -> Result<()> {
        let terminal = grid.terminal_period();
        let mut by_period: BTreeMap<usize, Vec<Subgoal>> = BTreeMap::new();
        for g in self.nodes.keys() {
            by_period.entry(g.period).or_default().push(*g);
        }
        for (&period, goals) in by_period.iter().rev() {
            for &g in goals {
                let value = if period == terminal {
                    self.nodes[&g].terminal_mean()
                } else {
                    let succ = self.edges.get(&g).ok_or_else(|| {
                        Error::Contract(format!(
                            "node ({}, {}) has no successors; prune before value iteration",
                            g.period, g.level
                        ))
                    })?;
                    let mut best = f64::NEG_INFINITY;
                    for (to, e) in succ {
                        let v = e.mean_return() + e.mean_discount() * self.nodes[to].value;
                        best = best.max(v);
                    }
                    best
                };
                self.nodes.get_mut(&g).unwrap().value = value;
            }
        }
        Ok(())
    }

    /// Edge list dump: one row per edge with its aggregate statistics.
    pub fn write_edges_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "q,level,next_q,next_level,mean_return,mean_discount,count")?;
        for (from, targets) in &self.edges {
            for (to, e) in targets {
                writeln!(
                    w,
                    "{},{},{},{},{},{},{}",
                    from.period,
                    from.level,
                    to.period,
                    to.level,
                    e.mean_return(),
                    e.mean_discount(),
                    e.count
                )?;
            }
        }
        Ok(())
    }

    /// Raw node values, one row per node.
    pub fn write_values_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "period,level,value")?;
        for (g, n) in &self.nodes {
            writeln!(w, "{},{},{}", g.period, g.level, n.value)?;
        }
        Ok(())
    }
}

/// Per-period min-max normalization of goal values: each period's minimum
/// maps to 0 and maximum to 1; a constant period maps to all zeros.
/// Input rows are (period, level, value); output appends the normalized
/// value.
pub fn normalize_per_period(rows: &[(usize, usize, f64)]) -> Vec<(usize, usize, f64, f64)> {
    let mut range: BTreeMap<usize, (f64, f64)> = BTreeMap::new();
    for &(q, _, v) in rows {
        let e = range.entry(q).or_insert((v, v));
        e.0 = e.0.min(v);
        e.1 = e.1.max(v);
    }
    rows.iter()
        .map(|&(q, l, v)| {
            let (lo, hi) = range[&q];
            let norm = if hi > lo { (v - lo) / (hi - lo) } else { 0.0 };
            (q, l, v, norm)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(periods: usize) -> GoalGrid {
        GoalGrid::new(10, periods, 1.0, 4 * periods).unwrap()
    }

    fn g(period: usize, level: usize) -> Subgoal {
        Subgoal { period, level }
    }

    fn rec(from: Subgoal, to: Subgoal, ret: f64, disc: f64) -> GoalTransition {
        GoalTransition {
            from,
            to,
            discounted_return: ret,
            discount: disc,
        }
    }

    #[test]
    fn edge_means_accumulate() {
        let mut graph = GoalGraph::new();
        graph.add_transition(&rec(g(1, 0), g(2, 1), 1.0, 0.9)).unwrap();
        let e = &graph.successors(g(1, 0)).unwrap()[&g(2, 1)];
        assert_eq!(e.mean_return(), 1.0);
        assert_eq!(e.mean_discount(), 0.9);
        assert_eq!(e.count, 1);

        graph.add_transition(&rec(g(1, 0), g(2, 1), 3.0, 0.7)).unwrap();
        let e = &graph.successors(g(1, 0)).unwrap()[&g(2, 1)];
        assert_eq!(e.mean_return(), 2.0);
        assert!((e.mean_discount() - 0.8).abs() < 1e-15);
        assert_eq!(e.count, 2);
    }

    #[test]
    fn empty_extractions_give_empty_graph() {
        let graph = GoalGraph::from_extractions(std::iter::empty()).unwrap();
        assert_eq!(graph.node_count(), 0);
        assert_eq!(graph.edge_count(), 0);
    }

    #[test]
    fn non_adjacent_record_is_contract_error() {
        let mut graph = GoalGraph::new();
        assert!(matches!(
            graph.add_transition(&rec(g(1, 0), g(3, 0), 1.0, 0.9)),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn prune_keeps_complete_chain() {
        let grid = grid(3);
        let mut graph = GoalGraph::new();
        graph.add_transition(&rec(g(1, 0), g(2, 1), 1.0, 0.9)).unwrap();
        let report = graph.prune(&grid);
        assert_eq!(graph.node_count(), 2);
        assert!(!report.is_empty);
        assert_eq!(report.removed_backward + report.removed_forward, 0);
    }

    #[test]
    fn prune_drops_dead_end() {
        // period 1 -> period 2 dead end in a 4-period grid: nothing reaches
        // the terminal period, so everything goes
        let grid = grid(4);
        let mut graph = GoalGraph::new();
        graph.add_transition(&rec(g(1, 0), g(2, 1), 1.0, 0.9)).unwrap();
        let report = graph.prune(&grid);
        assert!(report.is_empty);
        assert_eq!(graph.node_count(), 0);
    }

    #[test]
    fn prune_removes_isolated_middle_node() {
        // hand-checked four-node shape: chain 1 -> 2 -> 3 survives, the
        // isolated period-2 node goes in the backward stage
        let grid = grid(4);
        let mut graph = GoalGraph::new();
        graph.add_transition(&rec(g(1, 0), g(2, 0), 1.0, 0.9)).unwrap();
        graph.add_transition(&rec(g(2, 0), g(3, 0), 1.0, 0.9)).unwrap();
        graph.add_terminal_observation(g(2, 5), 0.0); // isolated, mid-period
        let report = graph.prune(&grid);
        assert_eq!(graph.node_count(), 3);
        assert!(!graph.contains(g(2, 5)));
        assert_eq!(report.removed_backward, 1);
    }

    #[test]
    fn prune_removes_orphan_branch() {
        // node reaching the terminal set but unreachable from period 1
        let grid = grid(3);
        let mut graph = GoalGraph::new();
        graph.add_transition(&rec(g(1, 0), g(2, 0), 1.0, 0.9)).unwrap();
        graph.add_terminal_observation(g(2, 7), 1.0); // terminal orphan: kept by
                                                      // backward, dropped by forward
        let report = graph.prune(&grid);
        assert_eq!(graph.node_count(), 2);
        assert!(!graph.contains(g(2, 7)));
        assert_eq!(report.removed_forward, 1);
    }

    #[test]
    fn value_iteration_hand_example() {
        let grid = grid(3);
        let mut graph = GoalGraph::new();
        graph.add_transition(&rec(g(1, 0), g(2, 0), 2.0, 0.9)).unwrap();
        // one more hop below the terminal layer
        let grid4 = GoalGrid::new(10, 4, 1.0, 16).unwrap();
        let mut graph4 = GoalGraph::new();
        graph4.add_transition(&rec(g(1, 0), g(2, 0), 1.0, 0.9)).unwrap();
        graph4.add_transition(&rec(g(2, 0), g(3, 0), 2.0, 0.9)).unwrap();
        graph4.prune(&grid4);
        graph4.value_iteration(&grid4).unwrap();
        assert_eq!(graph4.value(g(3, 0)).unwrap(), 0.0);
        assert!((graph4.value(g(2, 0)).unwrap() - 2.0).abs() < 1e-12);
        assert!((graph4.value(g(1, 0)).unwrap() - 2.8).abs() < 1e-12);

        graph.prune(&grid);
        graph.value_iteration(&grid).unwrap();
        assert!((graph.value(g(1, 0)).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn value_iteration_takes_max_branch() {
        let grid = grid(3);
        let mut graph = GoalGraph::new();
        graph.add_transition(&rec(g(1, 0), g(2, 0), 1.0, 1.0)).unwrap();
        graph.add_transition(&rec(g(1, 0), g(2, 1), 1.0, 1.0)).unwrap();
        graph.add_terminal_observation(g(2, 0), 5.0);
        graph.add_terminal_observation(g(2, 1), 3.0);
        graph.prune(&grid);
        graph.value_iteration(&grid).unwrap();
        assert_eq!(graph.value(g(1, 0)).unwrap(), 6.0);
    }

    #[test]
    fn value_iteration_all_zero_rewards() {
        let grid = grid(3);
        let mut graph = GoalGraph::new();
        graph.add_transition(&rec(g(1, 0), g(2, 0), 0.0, 0.9)).unwrap();
        graph.prune(&grid);
        graph.value_iteration(&grid).unwrap();
        assert_eq!(graph.value(g(1, 0)).unwrap(), 0.0);
        assert_eq!(graph.value(g(2, 0)).unwrap(), 0.0);
    }

    #[test]
    fn value_iteration_rejects_dead_ends() {
        let grid = grid(4);
        let mut graph = GoalGraph::new();
        graph.add_transition(&rec(g(1, 0), g(2, 0), 1.0, 0.9)).unwrap();
        // skipping prune leaves a period-2 node with no successors
        assert!(matches!(
            graph.value_iteration(&grid),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn normalization_per_period() {
        let rows = vec![(1, 0, 1.0), (1, 1, 3.0), (2, 0, 4.0), (2, 1, 4.0)];
        let out = normalize_per_period(&rows);
        assert_eq!(out[0].3, 0.0);
        assert_eq!(out[1].3, 1.0);
        // constant period maps to zero
        assert_eq!(out[2].3, 0.0);
        assert_eq!(out[3].3, 0.0);
    }

    #[test]
    fn edges_csv_is_sorted_and_parseable() {
        let mut graph = GoalGraph::new();
        graph.add_transition(&rec(g(2, 3), g(3, 1), 1.5, 0.8)).unwrap();
        graph.add_transition(&rec(g(1, 0), g(2, 3), 1.0, 0.9)).unwrap();
        let mut out = Vec::new();
        graph.write_edges_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "q,level,next_q,next_level,mean_return,mean_discount,count");
        assert!(lines[1].starts_with("1,0,2,3,"));
        assert!(lines[2].starts_with("2,3,3,1,"));
    }
}
