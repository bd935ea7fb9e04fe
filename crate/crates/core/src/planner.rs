//! Backward task search: conflict-driven task graph and dynamic tree search.
//!
//! Starting from the goal, the planner asks for the action that would make
//! progress if nothing were in the way. If that action is blocked in the
//! current world, the blocking condition becomes a subgoal whose action is
//! tried next, and so on until an executable action is found. Only that action
//! is executed; the graph is rebuilt from the resulting world.

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{footprint_penetration, BlockPose, Point};
use crate::miqp::{branch_and_bound, build_placement_model, KeepOut, MiqpError};
use crate::symbolic::{
    abstract_state, check_preconditions, succ_dagger, Action, ActionKind, GoalSpec, Precondition,
    SymbolicError, SymbolicState, Target, TargetState,
};
use crate::world::{BlockId, PlannerConfig, Support, WorldState};

/// Extra clearance added to keep-outs so that optimal placements on a
/// keep-out boundary do not flip predicates through rounding.
const KEEPOUT_EPS: f64 = 1e-6;
/// Geometric tolerance of the replay check.
pub const REPLAY_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum PlannerError {
    #[error("no feasible placement for {action}")]
    Infeasible { action: Action },
    #[error("planner cycles on {action}")]
    CycleDetected { action: Action },
    #[error("{action} has no conflict")]
    NoConflict { action: Action },
    #[error(transparent)]
    Symbolic(#[from] SymbolicError),
    #[error(transparent)]
    Miqp(#[from] MiqpError),
}

/// Why an action cannot be executed right now.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Conflict {
    /// `top` is the highest block above the one to pick.
    NotClear { top: BlockId },
    OutOfReach,
    /// Top of the nearest strictly taller column within grasp clearance.
    Obstructed { by: BlockId },
    /// Top of a column standing where the block must go.
    DestinationBlocked { top: BlockId },
}

/// What a subgoal asks for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Subgoal {
    Goal,
    Relocate { block: BlockId },
    IntoReach { block: BlockId },
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaskGraphResult {
    /// Last element executes first.
    pub actions: Vec<Action>,
    pub subgoals: Vec<Subgoal>,
}

impl TaskGraphResult {
    pub fn top(&self) -> Option<&Action> {
        self.actions.last()
    }
}

/// Predicates of `world` with the goal point as the slot.
pub fn abstract_for(world: &WorldState, goal: &GoalSpec, config: &PlannerConfig) -> SymbolicState {
    abstract_state(
        world,
        &config.workspace.reach,
        config.grasp_clearance,
        Some((goal.target_point(), config.slot_tolerance)),
    )
}

/// Conflicts of `action` in `world`, most urgent first.
pub fn conflicts(world: &WorldState, s: &SymbolicState, action: &Action, goal: &GoalSpec, config: &PlannerConfig) -> Vec<Conflict> {
    let b = action.block;
    let mut out = Vec::new();
    if let Some(&top) = world.blocks_above(b).last() {
        out.push(Conflict::NotClear { top });
    }
    match action.kind {
        ActionKind::ToolPull => return out,
        ActionKind::PickPlace => {}
    }
    if !s.reachable.contains(&b) {
        out.push(Conflict::OutOfReach);
    }
    if world.is_free_on_top(b) {
        if let Some(&by) = world.taller_neighbors(b, config.grasp_clearance).first() {
            out.push(Conflict::Obstructed { by });
        }
    }
    if let Target::GoalSlot { level } = action.target {
        let chain = s.slot_chain();
        if level == 0 {
            let slot = goal.target_point();
            let margin = config.obstacle_margin;
            let blocker = world
                .table_blocks()
                .filter(|o| o.id != b)
                .find(|o| footprint_penetration(&o.pose, &slot, margin) > REPLAY_TOL)
                .map(|o| o.id);
            if let Some(base) = blocker {
                out.push(Conflict::DestinationBlocked { top: world.column_top(base) });
            }
        } else if chain.len() > level {
            out.push(Conflict::DestinationBlocked { top: *chain.last().unwrap() });
        }
    }
    out
}

/// Subgoal resolving the first conflict of `action`.
pub fn sub_goal(world: &WorldState, s: &SymbolicState, action: &Action, goal: &GoalSpec, config: &PlannerConfig) -> Result<(Subgoal, Conflict), PlannerError> {
    let c = *conflicts(world, s, action, goal, config)
        .first()
        .ok_or(PlannerError::NoConflict { action: *action })?;
    let g = match c {
        Conflict::NotClear { top } => Subgoal::Relocate { block: top },
        Conflict::OutOfReach => Subgoal::IntoReach { block: action.block },
        Conflict::Obstructed { by } => Subgoal::Relocate { block: by },
        Conflict::DestinationBlocked { top } => Subgoal::Relocate { block: top },
    };
    Ok((g, c))
}

fn target_of(s: &SymbolicState, g: &Subgoal, goal: &GoalSpec) -> TargetState {
    match *g {
        Subgoal::Goal => TargetState::Stack(goal.order.clone()),
        Subgoal::Relocate { block } => TargetState::Moved { block, from: s.on[&block] },
        Subgoal::IntoReach { block } => TargetState::Reachable(block),
    }
}

/// Conflict-driven task graph from the current world toward `goal`.
pub fn task_graph(world: &WorldState, s: &SymbolicState, goal: &GoalSpec, config: &PlannerConfig) -> Result<TaskGraphResult, PlannerError> {
    let mut a = succ_dagger(s, &TargetState::Stack(goal.order.clone()))?;
    let mut result = TaskGraphResult { actions: vec![a], subgoals: vec![Subgoal::Goal] };
    let mut seen: HashSet<(Action, Conflict)> = HashSet::new();
    let limit = 4 * world.len().max(1);
    loop {
        if conflicts(world, s, &a, goal, config).is_empty() {
            return Ok(result);
        }
        let (g, c) = sub_goal(world, s, &a, goal, config)?;
        if !seen.insert((a, c)) || result.actions.len() > limit {
            return Err(PlannerError::CycleDetected { action: a });
        }
        a = succ_dagger(s, &target_of(s, &g, goal))?;
        result.actions.push(a);
        result.subgoals.push(g);
    }
}

/// Regions a free placement of `moved` must avoid: the goal point while the
/// stack is unfinished, and grasp-clearance zones that would make a block still
/// to be picked obstructed.
pub fn keepouts_for(
    world: &WorldState,
    s: &SymbolicState,
    goal: &GoalSpec,
    moved: BlockId,
    stack: &[Action],
    config: &PlannerConfig,
) -> Vec<KeepOut> {
    let l = config.workspace.block_size;
    let zone = l / 2.0 + config.grasp_clearance + KEEPOUT_EPS;
    let mut out = Vec::new();
    let unsatisfied = goal.pending(s);
    if !unsatisfied.is_empty() {
        let t = goal.target_point();
        out.push(KeepOut { pose: BlockPose::axis_aligned(t.x, t.y, l, l), margin: zone });
    }
    let mut pending: BTreeSet<BlockId> = unsatisfied.iter().copied().collect();
    pending.extend(stack.iter().map(|a| a.block));
    let moved_pending = pending.remove(&moved);

    let h = world.block(moved).pose.height;
    let mut guarded: BTreeSet<BlockId> = BTreeSet::new();
    for &p in &pending {
        let base = world.column_base(p);
        if h > world.z_top(p) + 1e-9 && guarded.insert(base) {
            out.push(KeepOut { pose: world.block(base).pose, margin: zone });
        }
    }
    if moved_pending {
        let moved_base = world.column_base(moved);
        for c in world.table_blocks() {
            let height = if c.id == moved_base { world.z_bottom(moved) } else { world.column_height(c.id) };
            if c.id != moved && height > h + 1e-9 && guarded.insert(c.id) {
                let mut pose = c.pose;
                pose.theta = 0.0;
                out.push(KeepOut { pose, margin: zone });
            }
        }
    }
    out
}

/// Where `action` puts its block: the xy of the destination.
pub fn slot_point(world: &WorldState, s: &SymbolicState, goal: &GoalSpec, level: usize) -> Point {
    if level == 0 {
        goal.target_point()
    } else {
        world.position(s.slot_chain()[level - 1])
    }
}

/// Kinematic effect of executing `action` with placement `at`.
pub fn apply_action(world: &WorldState, s: &SymbolicState, action: &Action, at: &Point) -> WorldState {
    let mut next = world.clone();
    let (support, theta) = match action.target {
        Target::GoalSlot { level } if level > 0 => {
            let lower = s.slot_chain()[level - 1];
            (Support::Block(lower), world.block(lower).pose.theta)
        }
        _ => (Support::Table, 0.0),
    };
    let b = next.block_mut(action.block);
    b.support = support;
    b.pose.x = at.x;
    b.pose.y = at.y;
    b.pose.theta = theta;
    next
}

/// Which planning level produced a plan.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlanStage {
    Dts,
    Refined,
    /// Refinement was attempted but the input plan was kept.
    Unrefined,
    /// Forward tree-search baseline.
    Mbts,
    /// Brute-force reference plan.
    Oracle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub skeleton: Vec<Action>,
    /// Placement point of each action.
    pub keyframes: Vec<[f64; 2]>,
    /// World before the first action and after each action.
    pub worlds: Vec<WorldState>,
    pub ee_displacement: f64,
    pub makespan: usize,
    pub nodes_visited: usize,
    pub phase_duration: f64,
    pub stage: PlanStage,
}

impl Plan {
    /// Plan from executed steps; `worlds` has one more entry than `skeleton`.
    pub fn from_steps(
        skeleton: Vec<Action>,
        keyframes: Vec<[f64; 2]>,
        worlds: Vec<WorldState>,
        nodes_visited: usize,
        phase_duration: f64,
        stage: PlanStage,
    ) -> Self {
        let picks: Vec<Point> = (0..skeleton.len()).map(|k| worlds[k].position(skeleton[k].block)).collect();
        let places: Vec<Point> = keyframes.iter().map(|p| Point::new(p[0], p[1])).collect();
        Plan {
            makespan: skeleton.len(),
            ee_displacement: ee_displacement(&picks, &places),
            skeleton,
            keyframes,
            worlds,
            nodes_visited,
            phase_duration,
            stage,
        }
    }

    pub fn keyframe(&self, k: usize) -> Point {
        Point::new(self.keyframes[k][0], self.keyframes[k][1])
    }

    /// Pick point of step `k`.
    pub fn pick_point(&self, k: usize) -> Point {
        self.worlds[k].position(self.skeleton[k].block)
    }

    pub fn final_world(&self) -> &WorldState {
        self.worlds.last().expect("plan has an initial world")
    }
}

/// End-effector travel: every pick→place leg plus every place→next-pick leg.
pub fn ee_displacement(picks: &[Point], places: &[Point]) -> f64 {
    let mut d = 0.0;
    for k in 0..picks.len() {
        d += (places[k] - picks[k]).norm();
        if k + 1 < picks.len() {
            d += (picks[k + 1] - places[k]).norm();
        }
    }
    d
}

/// Optimal free placement of `action` given the current task-graph stack.
pub fn place_free(
    world: &WorldState,
    s: &SymbolicState,
    goal: &GoalSpec,
    action: &Action,
    stack: &[Action],
    config: &PlannerConfig,
) -> Result<Point, PlannerError> {
    let keep = keepouts_for(world, s, goal, action.block, stack, config);
    let from = world.position(action.block);
    let model = build_placement_model(world, action, &keep, &from, config)?;
    let r = branch_and_bound(&model)?;
    if !r.is_optimal() {
        return Err(PlannerError::Infeasible { action: *action });
    }
    Ok(r.point(0))
}

/// Backward search: execute the top of the task graph, re-plan, repeat.
pub fn dts_solve(world0: &WorldState, goal: &GoalSpec, config: &PlannerConfig) -> Result<Plan, PlannerError> {
    dts_solve_with(world0, goal, config, |w, s, a, stack| place_free(w, s, goal, a, stack, config))
}

/// [`dts_solve`] with a caller-supplied solver for free placements. It gets
/// the world, its abstraction, the action and the task-graph stack below it.
pub fn dts_solve_with<F>(world0: &WorldState, goal: &GoalSpec, config: &PlannerConfig, mut place: F) -> Result<Plan, PlannerError>
where
    F: FnMut(&WorldState, &SymbolicState, &Action, &[Action]) -> Result<Point, PlannerError>,
{
    let mut world = world0.clone();
    let mut worlds = vec![world.clone()];
    let mut skeleton = Vec::new();
    let mut keyframes = Vec::new();
    let mut nodes = 0usize;
    let max_steps = 6 * world0.len() + 6;

    loop {
        let s = abstract_for(&world, goal, config);
        if goal.satisfied_levels(&s) == goal.order.len() {
            break;
        }
        let tg = task_graph(&world, &s, goal, config)?;
        nodes += tg.actions.len();
        let a = *tg.top().expect("task graph is never empty");
        if skeleton.len() >= max_steps {
            return Err(PlannerError::CycleDetected { action: a });
        }
        if let Some(violated) = check_preconditions(&s, &a) {
            return Err(SymbolicError::InapplicableAction { action: a, violated }.into());
        }
        let at = match a.target {
            Target::GoalSlot { level } => slot_point(&world, &s, goal, level),
            Target::FreePlacement | Target::ReachEntry => {
                place(&world, &s, &a, &tg.actions[..tg.actions.len() - 1])?
            }
        };
        world = apply_action(&world, &s, &a, &at);
        skeleton.push(a);
        keyframes.push([at.x, at.y]);
        worlds.push(world.clone());
    }

    Ok(Plan::from_steps(skeleton, keyframes, worlds, nodes, config.phase_duration, PlanStage::Dts))
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReplayError {
    #[error("step {step}: {action} violates {violated}")]
    Precondition { step: usize, action: Action, violated: Precondition },
    #[error("step {step}: placement {at:?} overlaps {other}")]
    Overlap { step: usize, at: [f64; 2], other: BlockId },
    #[error("step {step}: placement {at:?} outside table or reach")]
    OutOfBounds { step: usize, at: [f64; 2] },
    #[error("step {step}: slot placement off by {error}")]
    WrongSlot { step: usize, error: f64 },
    #[error("step {step}: recorded world differs from replay")]
    WorldMismatch { step: usize },
    #[error("plan is malformed: {0}")]
    Malformed(String),
    #[error("final world does not satisfy the goal")]
    GoalNotReached,
}

/// Re-executes a plan from `world0` and checks every step.
pub fn replay(world0: &WorldState, goal: &GoalSpec, plan: &Plan, config: &PlannerConfig) -> Result<WorldState, ReplayError> {
    let k = plan.skeleton.len();
    if plan.keyframes.len() != k || plan.makespan != k {
        return Err(ReplayError::Malformed("lengths differ".into()));
    }
    if !plan.worlds.is_empty() && plan.worlds.len() != k + 1 {
        return Err(ReplayError::Malformed("world trajectory length".into()));
    }
    let ws = &config.workspace;
    let mut world = world0.clone();
    for (step, a) in plan.skeleton.iter().enumerate() {
        if !world.contains(a.block) {
            return Err(ReplayError::Malformed(format!("unknown block {}", a.block)));
        }
        let s = abstract_for(&world, goal, config);
        if let Some(violated) = check_preconditions(&s, a) {
            return Err(ReplayError::Precondition { step, action: *a, violated });
        }
        let at = plan.keyframe(step);
        match a.target {
            Target::GoalSlot { level } => {
                let error = (slot_point(&world, &s, goal, level) - at).norm();
                if error > REPLAY_TOL {
                    return Err(ReplayError::WrongSlot { step, error });
                }
                if level == 0 {
                    check_overlap(&world, a.block, &at, config, step)?;
                }
            }
            Target::FreePlacement | Target::ReachEntry => {
                let inside = ws.table.holds(&at, ws.block_size - 2.0 * REPLAY_TOL)
                    && crate::geometry::reach_halfspaces(&ws.reach)
                        .iter()
                        .all(|h| h.slack(&at) >= -REPLAY_TOL);
                if !inside {
                    return Err(ReplayError::OutOfBounds { step, at: [at.x, at.y] });
                }
                check_overlap(&world, a.block, &at, config, step)?;
            }
        }
        world = apply_action(&world, &s, a, &at);
        if let Some(recorded) = plan.worlds.get(step + 1) {
            if !worlds_match(recorded, &world) {
                return Err(ReplayError::WorldMismatch { step });
            }
        }
    }
    if !goal.satisfied_by(&world, REPLAY_TOL) {
        return Err(ReplayError::GoalNotReached);
    }
    Ok(world)
}

/// First table block whose footprint a placement of `moved` at `at` would
/// penetrate.
pub fn placement_overlap(world: &WorldState, moved: BlockId, at: &Point, config: &PlannerConfig) -> Option<BlockId> {
    world
        .table_blocks()
        .find(|o| o.id != moved && footprint_penetration(&o.pose, at, config.obstacle_margin) > REPLAY_TOL)
        .map(|o| o.id)
}

fn check_overlap(world: &WorldState, moved: BlockId, at: &Point, config: &PlannerConfig, step: usize) -> Result<(), ReplayError> {
    match placement_overlap(world, moved, at, config) {
        Some(other) => Err(ReplayError::Overlap { step, at: [at.x, at.y], other }),
        None => Ok(()),
    }
}

pub fn worlds_match(a: &WorldState, b: &WorldState) -> bool {
    a.len() == b.len()
        && a.blocks.iter().zip(&b.blocks).all(|(x, y)| {
            x.id == y.id
                && x.support == y.support
                && (x.pose.x - y.pose.x).abs() <= REPLAY_TOL
                && (x.pose.y - y.pose.y).abs() <= REPLAY_TOL
                && (x.pose.theta - y.pose.theta).abs() <= REPLAY_TOL
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{WorldBuilder, SHORT_HEIGHT, TALL_HEIGHT};

    /// A=0, C=1, B=2 on C.
    fn crossed_tower() -> (WorldState, GoalSpec) {
        let mut wb = WorldBuilder::new(0.05);
        let a = wb.on_table(-0.2, 0.1, SHORT_HEIGHT);
        let c = wb.on_table(0.2, 0.1, SHORT_HEIGHT);
        let b = wb.on_block(c, SHORT_HEIGHT);
        (wb.build(), GoalSpec::new(vec![c, b, a], (0.0, -0.25)))
    }

    const A: BlockId = BlockId(0);
    const C: BlockId = BlockId(1);
    const B: BlockId = BlockId(2);

    #[test]
    fn crossed_tower_task_graph_relocates_b_first() {
        let cfg = PlannerConfig::default();
        let (w, g) = crossed_tower();
        let s = abstract_for(&w, &g, &cfg);
        let tg = task_graph(&w, &s, &g, &cfg).unwrap();
        assert_eq!(tg.actions, vec![Action::to_slot(C, 0), Action::relocate(B)]);
        assert_eq!(tg.subgoals, vec![Subgoal::Goal, Subgoal::Relocate { block: B }]);
    }

    #[test]
    fn crossed_tower_subgoal_is_moving_b() {
        let cfg = PlannerConfig::default();
        let (w, g) = crossed_tower();
        let s = abstract_for(&w, &g, &cfg);
        let (sg, c) = sub_goal(&w, &s, &Action::to_slot(C, 0), &g, &cfg).unwrap();
        assert_eq!(sg, Subgoal::Relocate { block: B });
        assert_eq!(c, Conflict::NotClear { top: B });
        assert!(matches!(
            sub_goal(&w, &s, &Action::relocate(B), &g, &cfg),
            Err(PlannerError::NoConflict { .. })
        ));
    }

    #[test]
    fn crossed_tower_plan() {
        let cfg = PlannerConfig::default();
        let (w, g) = crossed_tower();
        let plan = dts_solve(&w, &g, &cfg).unwrap();
        assert_eq!(
            plan.skeleton,
            vec![Action::relocate(B), Action::to_slot(C, 0), Action::to_slot(B, 1), Action::to_slot(A, 2)]
        );
        assert_eq!(plan.makespan, 4);
        // [C, B], [C], [B], [A]
        assert_eq!(plan.nodes_visited, 5);
        replay(&w, &g, &plan, &cfg).unwrap();
        // B's parking spot avoids the goal zone
        let p2 = plan.keyframe(0);
        let zone = 0.025 + cfg.grasp_clearance + 0.025;
        assert!((p2.x - 0.0).abs().max((p2.y + 0.25).abs()) >= zone - 1e-9);
    }

    #[test]
    fn satisfied_goal_gives_empty_plan() {
        let cfg = PlannerConfig::default();
        let mut wb = WorldBuilder::new(0.05);
        let a = wb.on_table(0.0, -0.25, SHORT_HEIGHT);
        let b = wb.on_block(a, SHORT_HEIGHT);
        let w = wb.build();
        let g = GoalSpec::new(vec![a, b], (0.0, -0.25));
        let plan = dts_solve(&w, &g, &cfg).unwrap();
        assert_eq!(plan.makespan, 0);
        assert_eq!(plan.nodes_visited, 0);
        replay(&w, &g, &plan, &cfg).unwrap();
    }

    #[test]
    fn stacked_obstructors_unstack_from_the_top() {
        let cfg = PlannerConfig::default();
        let mut wb = WorldBuilder::new(0.05);
        let t = wb.on_table(0.1, 0.2, SHORT_HEIGHT);
        let o1 = wb.on_block(t, SHORT_HEIGHT);
        let o2 = wb.on_block(o1, SHORT_HEIGHT);
        let o3 = wb.on_block(o2, SHORT_HEIGHT);
        let w = wb.build();
        let g = GoalSpec::new(vec![t], (0.0, -0.3));
        let s = abstract_for(&w, &g, &cfg);
        let tg = task_graph(&w, &s, &g, &cfg).unwrap();
        // hand-simulated: Pick[t] blocked by o3 (topmost), which is free.
        assert_eq!(tg.actions, vec![Action::to_slot(t, 0), Action::relocate(o3)]);
        let plan = dts_solve(&w, &g, &cfg).unwrap();
        assert_eq!(
            plan.skeleton,
            vec![Action::relocate(o3), Action::relocate(o2), Action::relocate(o1), Action::to_slot(t, 0)]
        );
        replay(&w, &g, &plan, &cfg).unwrap();
    }

    #[test]
    fn chain_of_conflicts_builds_deep_stack() {
        // t and u out of reach, u on t: Pick[t] -> Relocate(u) -> Pull(u).
        let cfg = PlannerConfig::for_workspace(crate::world::Workspace {
            table: crate::world::TableBounds::centered(2.0, 2.0),
            ..Default::default()
        });
        let mut wb = WorldBuilder::new(0.05);
        let t = wb.on_table(0.9, 0.0, SHORT_HEIGHT);
        let u = wb.on_block(t, SHORT_HEIGHT);
        let v = wb.on_table(0.3, 0.3, SHORT_HEIGHT);
        let w = wb.build();
        let g = GoalSpec::new(vec![t, v], (0.0, -0.3));
        let s = abstract_for(&w, &g, &cfg);
        let tg = task_graph(&w, &s, &g, &cfg).unwrap();
        // Pick[t] blocked by u; Relocate(u) out of reach; Pull(u).
        assert_eq!(tg.actions, vec![Action::to_slot(t, 0), Action::relocate(u), Action::pull(u)]);
        let plan = dts_solve(&w, &g, &cfg).unwrap();
        replay(&w, &g, &plan, &cfg).unwrap();
        assert!(plan.skeleton.contains(&Action::pull(t)));
    }

    #[test]
    fn obstruction_relocates_nearest_taller() {
        let cfg = PlannerConfig::default();
        let mut wb = WorldBuilder::new(0.05);
        let t = wb.on_table(0.0, 0.2, SHORT_HEIGHT);
        let near = wb.on_table(0.055, 0.2, TALL_HEIGHT);
        let far = wb.on_table(0.0, 0.29, TALL_HEIGHT);
        let w = wb.build();
        let g = GoalSpec::new(vec![t], (0.0, -0.3));
        let plan = dts_solve(&w, &g, &cfg).unwrap();
        assert_eq!(
            plan.skeleton,
            vec![Action::relocate(near), Action::relocate(far), Action::to_slot(t, 0)]
        );
        // [t, near], [t, far], [t]
        assert_eq!(plan.nodes_visited, 5);
        replay(&w, &g, &plan, &cfg).unwrap();
    }

    #[test]
    fn replay_rejects_tampered_plans() {
        let cfg = PlannerConfig::default();
        let (w, g) = crossed_tower();
        let plan = dts_solve(&w, &g, &cfg).unwrap();
        let mut bad = plan.clone();
        bad.skeleton.swap(0, 1);
        assert!(replay(&w, &g, &bad, &cfg).is_err());
        let mut bad = plan.clone();
        bad.keyframes[0] = [0.2, 0.1];
        assert!(replay(&w, &g, &bad, &cfg).is_err());
        let mut bad = plan;
        bad.skeleton.pop();
        bad.keyframes.pop();
        bad.worlds.pop();
        bad.makespan -= 1;
        assert_eq!(replay(&w, &g, &bad, &cfg), Err(ReplayError::GoalNotReached));
    }

    #[test]
    fn plan_has_no_removable_action() {
        let cfg = PlannerConfig::default();
        let (w, g) = crossed_tower();
        let plan = dts_solve(&w, &g, &cfg).unwrap();
        for k in 0..plan.makespan {
            let mut p = plan.clone();
            p.skeleton.remove(k);
            p.keyframes.remove(k);
            p.worlds.clear();
            p.makespan -= 1;
            assert!(replay(&w, &g, &p, &cfg).is_err(), "step {k} is removable");
        }
    }
}
