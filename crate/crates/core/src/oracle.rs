//! Brute-force reference planner for small instances.
//!
//! Makespan comes from a breadth-first search over action skeletons. Free
//! placements are drawn from a grid; grid points that lead to the same
//! symbolic situation are interchangeable for the search, so only the one
//! closest to the pick point is expanded. Displacement is then minimized
//! exactly over the full grid for every skeleton of optimal length.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{footprint_penetration, frame_chebyshev, reach_halfspaces, Point};
use crate::planner::{abstract_for, apply_action, placement_overlap, slot_point, Plan, PlanStage, REPLAY_TOL};
use crate::symbolic::{applicable_actions, check_preconditions, Action, GoalSpec, SymbolicState, Target};
use crate::world::{BlockId, PlannerConfig, WorldState};

/// Placement grid resolution, meters.
pub const GRID_STEP: f64 = 0.005;
pub const MAX_BLOCKS: usize = 5;
pub const MAX_ACTIONS: usize = 6;
/// Representatives are taken from every other grid line.
const REP_STRIDE: i64 = 2;
/// Distinct skeleton prefixes kept per symbolic situation.
const PREFIXES_PER_KEY: usize = 8;
/// Grid evaluations allowed in the displacement search.
const EVAL_BUDGET: usize = 20_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub makespan: usize,
    /// Smallest travel over optimal-length skeletons, on the grid.
    pub ee_displacement: f64,
    pub plan: Plan,
    /// Optimal-length skeletons examined.
    pub skeletons: usize,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("oracle handles at most {MAX_BLOCKS} blocks, got {0}")]
    TooManyBlocks(usize),
    #[error("oracle handles at most {MAX_ACTIONS} actions, got {0}")]
    TooManyActions(usize),
    #[error("no plan with at most {max_actions} actions")]
    Exhausted { max_actions: usize },
    #[error("displacement search ran out of budget")]
    BudgetExceeded,
}

/// Situation key: the symbolic state plus which table blocks cover the goal point.
type Key = (SymbolicState, Vec<BlockId>);

struct Ctx<'a> {
    goal: &'a GoalSpec,
    config: &'a PlannerConfig,
    /// Grid points on the table and inside the reach polygon, with their
    /// integer coordinates.
    lattice: Vec<(i64, i64, Point)>,
    /// The same points as a dense row-major grid starting at `origin`.
    dense: Vec<Option<Point>>,
    origin: (i64, i64),
    cols: i64,
}

impl Ctx<'_> {
    fn new<'a>(goal: &'a GoalSpec, config: &'a PlannerConfig) -> Ctx<'a> {
        let ws = &config.workspace;
        let h = ws.block_size / 2.0;
        let t = &ws.table;
        let reach = reach_halfspaces(&ws.reach);
        let (i0, i1) = (((t.x_min + h) / GRID_STEP).ceil() as i64, ((t.x_max - h) / GRID_STEP).floor() as i64);
        let (j0, j1) = (((t.y_min + h) / GRID_STEP).ceil() as i64, ((t.y_max - h) / GRID_STEP).floor() as i64);
        let mut lattice = Vec::new();
        let mut dense = Vec::new();
        for i in i0..=i1 {
            for j in j0..=j1 {
                let p = Point::new(i as f64 * GRID_STEP, j as f64 * GRID_STEP);
                let ok = t.holds(&p, ws.block_size) && reach.iter().all(|r| r.slack(&p) >= 0.0);
                if ok {
                    lattice.push((i, j, p));
                }
                dense.push(ok.then_some(p));
            }
        }
        Ctx { goal, config, lattice, dense, origin: (i0, j0), cols: j1 - j0 + 1 }
    }

    /// Grid points in the square of half-width `r` around `c`.
    fn points_near(&self, c: &Point, r: f64) -> impl Iterator<Item = Point> + '_ {
        let rows = self.dense.len() as i64 / self.cols;
        let span = |lo: f64, hi: f64, o: i64, n: i64| {
            let a = ((lo / GRID_STEP).floor() as i64 - o).max(0);
            let b = ((hi / GRID_STEP).ceil() as i64 - o).min(n - 1);
            a..=b
        };
        let ri = span(c.x - r, c.x + r, self.origin.0, rows);
        let rj = span(c.y - r, c.y + r, self.origin.1, self.cols);
        ri.flat_map(move |i| rj.clone().filter_map(move |j| self.dense[(i * self.cols + j) as usize]))
    }

    fn key(&self, world: &WorldState) -> Key {
        let slot = self.goal.target_point();
        let blockers = world
            .table_blocks()
            .filter(|o| footprint_penetration(&o.pose, &slot, self.config.obstacle_margin) > REPLAY_TOL)
            .map(|o| o.id)
            .collect();
        (abstract_for(world, self.goal, self.config), blockers)
    }

    /// Goal reached both symbolically and as the replay verifier checks it.
    fn solved(&self, world: &WorldState) -> bool {
        let s = abstract_for(world, self.goal, self.config);
        self.goal.satisfied_levels(&s) == self.goal.order.len() && self.goal.satisfied_by(world, REPLAY_TOL)
    }

    /// Executes `a` at `at` if every check of the replay verifier passes.
    fn execute(&self, world: &WorldState, a: &Action, at: &Point) -> Option<WorldState> {
        let s = abstract_for(world, self.goal, self.config);
        if check_preconditions(&s, a).is_some() {
            return None;
        }
        if !matches!(a.target, Target::GoalSlot { level } if level > 0)
            && placement_overlap(world, a.block, at, self.config).is_some()
        {
            return None;
        }
        Some(apply_action(world, &s, a, at))
    }

    /// Cheap class of a free placement of `moved` at `p`: slot and reach
    /// membership plus, per table column, whether either footprint comes
    /// within grasp clearance of the other.
    fn signature(&self, world: &WorldState, moved: BlockId, p: &Point) -> u64 {
        let ws = &self.config.workspace;
        let l = ws.block_size;
        let slot = self.goal.target_point();
        let mut sig = u64::from((p - slot).norm() <= self.config.slot_tolerance);
        sig |= u64::from(ws.reach.contains(p)) << 1;
        sig |= u64::from(frame_chebyshev(p, &slot, 0.0) < l + self.config.obstacle_margin) << 2;
        for (k, c) in world.table_blocks().filter(|c| c.id != moved).enumerate() {
            let c0 = c.pose.center();
            let mine = frame_chebyshev(&c0, p, 0.0) - l < self.config.grasp_clearance;
            let theirs = frame_chebyshev(p, &c0, c.pose.theta) - l < self.config.grasp_clearance;
            sig |= (u64::from(mine) | u64::from(theirs) << 1) << (3 + 2 * k);
        }
        sig
    }

    /// Placement candidates of a free action: one per signature class,
    /// nearest the pick point.
    fn representatives(&self, world: &WorldState, a: &Action) -> Vec<Point> {
        let pick = world.position(a.block);
        let mut best: HashMap<u64, (f64, Point)> = HashMap::new();
        for &(i, j, p) in &self.lattice {
            if i % REP_STRIDE != 0 || j % REP_STRIDE != 0 {
                continue;
            }
            if placement_overlap(world, a.block, &p, self.config).is_some() {
                continue;
            }
            let d = (p - pick).norm();
            let e = best.entry(self.signature(world, a.block, &p)).or_insert((d, p));
            if d < e.0 {
                *e = (d, p);
            }
        }
        let mut reps: Vec<(f64, Point)> = best.into_values().collect();
        reps.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.x.total_cmp(&y.1.x)).then(x.1.y.total_cmp(&y.1.y)));
        reps.into_iter().map(|(_, p)| p).collect()
    }
}

struct Node {
    world: WorldState,
    steps: Vec<(Action, Point)>,
}

fn travel(world0: &WorldState, steps: &[(Action, Point)], goal: &GoalSpec, config: &PlannerConfig) -> Plan {
    let mut worlds = vec![world0.clone()];
    for (a, at) in steps {
        let w = worlds.last().unwrap();
        let s = abstract_for(w, goal, config);
        worlds.push(apply_action(w, &s, a, at));
    }
    Plan::from_steps(
        steps.iter().map(|(a, _)| *a).collect(),
        steps.iter().map(|(_, p)| [p.x, p.y]).collect(),
        worlds,
        0,
        config.phase_duration,
        PlanStage::Oracle,
    )
}

/// Shortest plan for `world0 → goal`, then the least travel among plans of
/// that length.
pub fn oracle_plan(world0: &WorldState, goal: &GoalSpec, config: &PlannerConfig, max_actions: usize) -> Result<OracleResult, OracleError> {
    if world0.len() > MAX_BLOCKS {
        return Err(OracleError::TooManyBlocks(world0.len()));
    }
    if max_actions > MAX_ACTIONS {
        return Err(OracleError::TooManyActions(max_actions));
    }
    let ctx = Ctx::new(goal, config);
    let mut frontier = vec![Node { world: world0.clone(), steps: Vec::new() }];
    let mut seen: HashMap<Key, (usize, Vec<Vec<Action>>)> = HashMap::new();
    seen.insert(ctx.key(world0), (0, vec![Vec::new()]));
    let mut expanded = 0usize;

    for depth in 0..=max_actions {
        let done: Vec<&Node> = frontier.iter().filter(|n| ctx.solved(&n.world)).collect();
        if !done.is_empty() {
            let mut skeletons: Vec<Vec<Action>> = Vec::new();
            let mut best: Option<Plan> = None;
            for n in &done {
                let skel: Vec<Action> = n.steps.iter().map(|(a, _)| *a).collect();
                if !skeletons.contains(&skel) {
                    skeletons.push(skel);
                }
                let p = travel(world0, &n.steps, goal, config);
                if best.as_ref().is_none_or(|b| p.ee_displacement < b.ee_displacement) {
                    best = Some(p);
                }
            }
            let mut best = best.expect("at least one solved node");
            let mut evals = 0usize;
            for skel in &skeletons {
                let mut search = Search { ctx: &ctx, skel, best_cost: best.ee_displacement, best_steps: None, evals: &mut evals };
                search.run(world0.clone(), 0, None, 0.0, &mut Vec::new())?;
                if let Some(steps) = search.best_steps {
                    best = travel(world0, &steps, goal, config);
                }
            }
            best.nodes_visited = expanded;
            return Ok(OracleResult { makespan: depth, ee_displacement: best.ee_displacement, plan: best, skeletons: skeletons.len() });
        }
        if depth == max_actions {
            break;
        }
        let mut next = Vec::new();
        for n in &frontier {
            let s = abstract_for(&n.world, goal, config);
            for a in applicable_actions(&s) {
                expanded += 1;
                let points = match a.target {
                    Target::GoalSlot { level } => vec![slot_point(&n.world, &s, goal, level)],
                    Target::FreePlacement | Target::ReachEntry => ctx.representatives(&n.world, &a),
                };
                for at in points {
                    let Some(w) = ctx.execute(&n.world, &a, &at) else { continue };
                    let mut skel: Vec<Action> = n.steps.iter().map(|(a, _)| *a).collect();
                    skel.push(a);
                    let entry = seen.entry(ctx.key(&w)).or_insert((depth + 1, Vec::new()));
                    if entry.0 != depth + 1 || entry.1.len() >= PREFIXES_PER_KEY || entry.1.contains(&skel) {
                        continue;
                    }
                    entry.1.push(skel);
                    let mut steps = n.steps.clone();
                    steps.push((a, at));
                    next.push(Node { world: w, steps });
                }
            }
        }
        frontier = next;
    }
    Err(OracleError::Exhausted { max_actions })
}

/// Depth-first minimization of travel for one fixed skeleton.
struct Search<'a, 'b> {
    ctx: &'a Ctx<'b>,
    skel: &'a [Action],
    best_cost: f64,
    best_steps: Option<Vec<(Action, Point)>>,
    evals: &'a mut usize,
}

/// A future event point as far as it is known before placing step `k`.
#[derive(Clone, Copy)]
enum Ahead {
    At(Point),
    /// The point chosen for step `k`.
    ThisPlacement,
}

impl Search<'_, '_> {
    /// Points after the placement of step `k` that are already determined.
    /// Skipping the unknown ones keeps the path length a lower bound.
    fn ahead(&self, world: &WorldState, k: usize) -> Vec<Ahead> {
        let goal = self.ctx.goal;
        let target = goal.target_point();
        let mut out = Vec::new();
        for j in k + 1..self.skel.len() {
            let b = self.skel[j].block;
            let moved = &self.skel[k..j];
            if !moved.iter().any(|a| a.block == b) {
                out.push(Ahead::At(world.position(b)));
            } else if !moved[1..].iter().any(|a| a.block == b) {
                out.push(Ahead::ThisPlacement);
            }
            let last_move = !self.skel[j + 1..].iter().any(|a| a.block == b);
            if matches!(self.skel[j].target, Target::GoalSlot { level: 0 }) || (last_move && goal.level_of(b).is_some()) {
                out.push(Ahead::At(target));
            }
        }
        out
    }

    fn run(&mut self, world: WorldState, k: usize, prev: Option<Point>, cost: f64, steps: &mut Vec<(Action, Point)>) -> Result<(), OracleError> {
        if k == self.skel.len() {
            if self.ctx.solved(&world) && cost < self.best_cost - 1e-12 {
                self.best_cost = cost;
                self.best_steps = Some(steps.clone());
            }
            return Ok(());
        }
        let a = self.skel[k];
        let s = abstract_for(&world, self.ctx.goal, self.ctx.config);
        if check_preconditions(&s, &a).is_some() {
            return Ok(());
        }
        let pick = world.position(a.block);
        let cost = cost + prev.map_or(0.0, |p| (pick - p).norm());
        let ahead = self.ahead(&world, k);
        // Goal positions are exact only up to the replay tolerance.
        let slack = 2.0 * REPLAY_TOL * ahead.len() as f64;
        let bound = |p: &Point| {
            let mut d = cost + (p - pick).norm() - slack;
            let mut cur = *p;
            for f in &ahead {
                let q = match f {
                    Ahead::At(q) => *q,
                    Ahead::ThisPlacement => *p,
                };
                d += (q - cur).norm();
                cur = q;
            }
            d
        };

        let mut candidates: Vec<(f64, Point)> = match a.target {
            Target::GoalSlot { level } => vec![slot_point(&world, &s, self.ctx.goal, level)],
            Target::FreePlacement | Target::ReachEntry => self.ctx.points_near(&pick, self.best_cost - cost).collect(),
        }
        .into_iter()
        .map(|p| (bound(&p), p))
        .filter(|(b, _)| *b < self.best_cost - 1e-12)
        .collect();
        *self.evals += candidates.len();
        if *self.evals > EVAL_BUDGET {
            return Err(OracleError::BudgetExceeded);
        }
        candidates.sort_by(|x, y| x.0.total_cmp(&y.0));
        for (b, p) in candidates {
            if b >= self.best_cost - 1e-12 {
                break;
            }
            let Some(w) = self.ctx.execute(&world, &a, &p) else { continue };
            steps.push((a, p));
            self.run(w, k + 1, Some(p), cost + (p - pick).norm(), steps)?;
            steps.pop();
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::{dts_solve, replay};
    use crate::world::{WorldBuilder, SHORT_HEIGHT, TALL_HEIGHT};

    #[test]
    fn satisfied_instance_needs_nothing() {
        let cfg = PlannerConfig::default();
        let mut wb = WorldBuilder::new(0.05);
        let a = wb.on_table(0.0, -0.25, SHORT_HEIGHT);
        let w = wb.build();
        let r = oracle_plan(&w, &GoalSpec::new(vec![a], (0.0, -0.25)), &cfg, 4).unwrap();
        assert_eq!(r.makespan, 0);
        assert_eq!(r.ee_displacement, 0.0);
    }

    #[test]
    fn tower_with_parking_move() {
        let cfg = PlannerConfig::default();
        let mut wb = WorldBuilder::new(0.05);
        let a = wb.on_table(-0.2, 0.1, SHORT_HEIGHT);
        let c = wb.on_table(0.2, 0.1, SHORT_HEIGHT);
        let b = wb.on_block(c, SHORT_HEIGHT);
        let w = wb.build();
        let g = GoalSpec::new(vec![c, b, a], (0.0, -0.25));
        let r = oracle_plan(&w, &g, &cfg, 6).unwrap();
        assert_eq!(r.makespan, 4);
        replay(&w, &g, &r.plan, &cfg).unwrap();
        let dts = dts_solve(&w, &g, &cfg).unwrap();
        assert_eq!(dts.makespan, 4);
        assert!(dts.ee_displacement >= r.ee_displacement - 2.0 * GRID_STEP);
    }

    #[test]
    fn obstructed_pick_needs_one_relocation() {
        let cfg = PlannerConfig::default();
        let mut wb = WorldBuilder::new(0.05);
        let t = wb.on_table(0.1, 0.2, SHORT_HEIGHT);
        wb.on_table(0.16, 0.2, TALL_HEIGHT);
        let w = wb.build();
        let g = GoalSpec::new(vec![t], (0.0, -0.25));
        let r = oracle_plan(&w, &g, &cfg, 4).unwrap();
        assert_eq!(r.makespan, 2);
        replay(&w, &g, &r.plan, &cfg).unwrap();
    }

    #[test]
    fn limits_are_enforced() {
        let cfg = PlannerConfig::default();
        let mut wb = WorldBuilder::new(0.05);
        let ids: Vec<_> = (0..6).map(|i| wb.on_table(-0.3 + 0.1 * i as f64, 0.3, SHORT_HEIGHT)).collect();
        let w = wb.build();
        let g = GoalSpec::new(vec![ids[0]], (0.0, -0.25));
        assert_eq!(oracle_plan(&w, &g, &cfg, 4).unwrap_err(), OracleError::TooManyBlocks(6));
        assert!(matches!(oracle_plan(&w, &g, &cfg, 7), Err(OracleError::TooManyBlocks(_) | OracleError::TooManyActions(_))));
    }
}
