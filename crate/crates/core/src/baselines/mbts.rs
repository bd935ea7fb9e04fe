//! Forward tree search with UCB selection, the usual LGP baseline.
//!
//! Every expansion solves the single-step placement problem of the new
//! action (the pose bound). Node values come from that bound alone: the
//! negative travel accumulated so far plus a bonus per satisfied goal level.
//! There are no rollouts.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::planner::{abstract_for, apply_action, place_free, placement_overlap, slot_point, Plan, PlanStage};
use crate::symbolic::{applicable_actions, Action, GoalSpec, SymbolicState, Target};
use crate::world::{PlannerConfig, WorldState};

/// Value added for every goal level already in place.
pub const LEVEL_BONUS: f64 = 1.0;

/// Exploration constants of the three named settings.
pub const MBTS_C: [f64; 3] = [0.1, 1.0, 10.0];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MbtsBudget {
    pub nodes: usize,
    pub seconds: f64,
}

impl Default for MbtsBudget {
    fn default() -> Self {
        MbtsBudget { nodes: 5_000, seconds: 100.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Feasibility {
    Unknown,
    PoseFeasible,
    Infeasible,
}

#[derive(Clone, Debug)]
pub struct MctsNode {
    pub symbolic: SymbolicState,
    pub world: WorldState,
    /// Action leading here and its placement.
    pub action: Option<(Action, [f64; 2])>,
    pub parent: Option<usize>,
    pub visit_count: usize,
    pub value_sum: f64,
    pub children: Vec<usize>,
    pub feasibility: Feasibility,
    /// Travel from the root to here.
    pub cost: f64,
    pub depth: usize,
    untried: Vec<Action>,
    /// No goal-reaching descendant can be found below this node.
    exhausted: bool,
}

impl MctsNode {
    pub fn mean_value(&self) -> f64 {
        if self.visit_count == 0 {
            0.0
        } else {
            self.value_sum / self.visit_count as f64
        }
    }
}

#[derive(Clone, Debug)]
pub enum MbtsOutcome {
    Solved(Plan),
    Timeout { nodes_visited: usize },
}

impl MbtsOutcome {
    pub fn plan(&self) -> Option<&Plan> {
        match self {
            MbtsOutcome::Solved(p) => Some(p),
            MbtsOutcome::Timeout { .. } => None,
        }
    }

    pub fn nodes_visited(&self) -> usize {
        match self {
            MbtsOutcome::Solved(p) => p.nodes_visited,
            MbtsOutcome::Timeout { nodes_visited } => *nodes_visited,
        }
    }
}

/// Pose-bound placement of `a`, or `None` if the single-step problem is
/// infeasible.
fn evaluate(world: &WorldState, s: &SymbolicState, goal: &GoalSpec, a: &Action, config: &PlannerConfig) -> Option<[f64; 2]> {
    let at = match a.target {
        Target::GoalSlot { level } => {
            let p = slot_point(world, s, goal, level);
            if level == 0 && placement_overlap(world, a.block, &p, config).is_some() {
                return None;
            }
            p
        }
        Target::FreePlacement | Target::ReachEntry => place_free(world, s, goal, a, &[], config).ok()?,
    };
    Some([at.x, at.y])
}

pub fn mbts_solve(world0: &WorldState, goal: &GoalSpec, exploration_c: f64, budget: MbtsBudget, config: &PlannerConfig) -> MbtsOutcome {
    assert!(exploration_c >= 0.0, "exploration constant must be non-negative");
    let started = Instant::now();
    let max_depth = 6 * world0.len() + 6;
    let s0 = abstract_for(world0, goal, config);
    if goal.satisfied_levels(&s0) == goal.order.len() {
        return MbtsOutcome::Solved(Plan::from_steps(vec![], vec![], vec![world0.clone()], 0, config.phase_duration, PlanStage::Mbts));
    }
    let mut tree = vec![MctsNode {
        untried: applicable_actions(&s0),
        symbolic: s0,
        world: world0.clone(),
        action: None,
        parent: None,
        visit_count: 0,
        value_sum: 0.0,
        children: Vec::new(),
        feasibility: Feasibility::PoseFeasible,
        cost: 0.0,
        depth: 0,
        exhausted: false,
    }];
    let mut nodes = 0usize;

    while nodes < budget.nodes && started.elapsed().as_secs_f64() < budget.seconds {
        // Selection: descend until a node with untried actions.
        let mut cur = 0;
        while tree[cur].untried.is_empty() {
            let parent_visits = tree[cur].visit_count.max(1) as f64;
            let pick = tree[cur]
                .children
                .iter()
                .copied()
                .filter(|&c| tree[c].feasibility == Feasibility::PoseFeasible && !tree[c].exhausted)
                .map(|c| {
                    let n = &tree[c];
                    let ucb = n.mean_value() + exploration_c * (parent_visits.ln() / n.visit_count.max(1) as f64).sqrt();
                    (c, ucb)
                })
                .fold(None, |best: Option<(usize, f64)>, (c, u)| match best {
                    Some((_, bu)) if bu >= u => best,
                    _ => Some((c, u)),
                });
            match pick {
                Some((c, _)) => cur = c,
                None => {
                    tree[cur].exhausted = true;
                    match tree[cur].parent {
                        Some(p) => cur = p,
                        None => return MbtsOutcome::Timeout { nodes_visited: nodes },
                    }
                }
            }
        }

        // Expansion of the next untried action.
        let a = tree[cur].untried.remove(0);
        nodes += 1;
        let parent = &tree[cur];
        let placement = evaluate(&parent.world, &parent.symbolic, goal, &a, config);
        let idx = tree.len();
        let Some(at) = placement else {
            let mut dead = parent.clone();
            dead.parent = Some(cur);
            dead.action = Some((a, [f64::NAN; 2]));
            dead.children.clear();
            dead.untried.clear();
            dead.feasibility = Feasibility::Infeasible;
            dead.visit_count = 0;
            dead.value_sum = 0.0;
            tree.push(dead);
            tree[cur].children.push(idx);
            continue;
        };
        let at_p = crate::geometry::Point::new(at[0], at[1]);
        let pick = parent.world.position(a.block);
        let approach = match parent.action {
            Some((_, prev)) => (pick - crate::geometry::Point::new(prev[0], prev[1])).norm(),
            None => 0.0,
        };
        let cost = parent.cost + approach + (at_p - pick).norm();
        let world = apply_action(&parent.world, &parent.symbolic, &a, &at_p);
        let s = abstract_for(&world, goal, config);
        let depth = parent.depth + 1;
        let levels = goal.satisfied_levels(&s);
        let value = -cost + LEVEL_BONUS * levels as f64;
        let solved = levels == goal.order.len();
        tree.push(MctsNode {
            untried: if depth < max_depth && !solved { applicable_actions(&s) } else { Vec::new() },
            symbolic: s,
            world,
            action: Some((a, at)),
            parent: Some(cur),
            visit_count: 0,
            value_sum: 0.0,
            children: Vec::new(),
            feasibility: Feasibility::PoseFeasible,
            cost,
            depth,
            exhausted: false,
        });
        tree[cur].children.push(idx);
        if solved {
            return MbtsOutcome::Solved(extract(&tree, idx, nodes, config));
        }
        // Backpropagation.
        let mut n = Some(idx);
        while let Some(i) = n {
            tree[i].visit_count += 1;
            tree[i].value_sum += value;
            n = tree[i].parent;
        }
    }
    MbtsOutcome::Timeout { nodes_visited: nodes }
}

fn extract(tree: &[MctsNode], leaf: usize, nodes: usize, config: &PlannerConfig) -> Plan {
    let mut path = Vec::new();
    let mut n = Some(leaf);
    while let Some(i) = n {
        path.push(i);
        n = tree[i].parent;
    }
    path.reverse();
    let worlds = path.iter().map(|&i| tree[i].world.clone()).collect();
    let (skeleton, keyframes) = path[1..].iter().map(|&i| tree[i].action.expect("non-root node has an action")).unzip();
    Plan::from_steps(skeleton, keyframes, worlds, nodes, config.phase_duration, PlanStage::Mbts)
}
