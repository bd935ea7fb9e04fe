//! Closed-loop execution with disturbances.
//!
//! Each iteration observes the true world (optionally with position noise),
//! plans from scratch on the observation, executes only the first action and
//! then applies any disturbance scheduled after that action. Execution is a
//! kinematic move of the block to its keyframe.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Point;
use crate::instance::SCHEMA_VERSION;
use crate::planner::{abstract_for, apply_action, dts_solve, slot_point};
use crate::symbolic::{check_preconditions, Action, ActionKind, GoalSpec, Target};
use crate::world::{BlockId, PlannerConfig, Support, WorldBuilder, WorldState, Workspace, SHORT_HEIGHT, TALL_HEIGHT};

/// Smallest footprint gap a disturbance may leave between table columns.
const MIN_GAP: f64 = 0.005;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Disturbance {
    /// Shift the column holding `block` by `(dx, dy)`.
    Displace { block: BlockId, dx: f64, dy: f64 },
    /// Knock over the column holding `block`; everything above its base lands
    /// on the table nearby.
    Topple { block: BlockId },
    /// Randomly reorder the column holding `block`.
    ShuffleStack { block: BlockId },
    /// Push the column holding `block` to `extra` meters beyond the reach
    /// polygon's circumradius.
    PushOutOfReach { block: BlockId, extra: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduledDisturbance {
    /// Applied right after this many actions have been executed.
    pub after_action: usize,
    pub disturbance: Disturbance,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub schema_version: u32,
    pub name: String,
    pub workspace: Workspace,
    pub world0: WorldState,
    pub goal: GoalSpec,
    pub disturbances: Vec<ScheduledDisturbance>,
    /// Standard deviation of xy observation noise, meters.
    pub noise_std: f64,
    pub max_replans: usize,
    pub seed: u64,
}

impl Scenario {
    pub fn config(&self) -> PlannerConfig {
        PlannerConfig::for_workspace(self.workspace)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.noise_std.is_nan() || self.noise_std < 0.0 {
            return Err(SimError::InvalidScenario("noise must be non-negative".into()));
        }
        if self.disturbances.windows(2).any(|w| w[0].after_action >= w[1].after_action) {
            return Err(SimError::InvalidScenario("disturbance triggers must be strictly increasing".into()));
        }
        self.world0.check_consistency().map_err(SimError::InvalidScenario)?;
        if self.goal.order.iter().any(|&b| !self.world0.contains(b)) {
            return Err(SimError::InvalidScenario("goal names an unknown block".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("disturbance not applicable: {0}")]
    Inapplicable(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "reason", rename_all = "kebab-case")]
pub enum Outcome {
    Success,
    Failure(String),
}

/// One perceive, plan, act iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub iteration: usize,
    pub observed: WorldState,
    pub plan: Vec<Action>,
    pub keyframes: Vec<[f64; 2]>,
    pub executed: Action,
    pub disturbance: Option<Disturbance>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub steps: Vec<TraceStep>,
    pub outcome: Outcome,
    pub replan_count: usize,
    pub final_world: WorldState,
}

#[derive(Serialize)]
#[serde(tag = "record", rename_all = "kebab-case")]
enum Line<'a> {
    Step {
        schema_version: u32,
        #[serde(flatten)]
        step: &'a TraceStep,
    },
    End { schema_version: u32, outcome: &'a Outcome, replan_count: usize, final_world: &'a WorldState },
}

impl Trace {
    pub fn is_success(&self) -> bool {
        self.outcome == Outcome::Success
    }

    /// JSON lines: one `step` record per iteration, then one `end` record.
    /// Every line carries the schema version.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for s in &self.steps {
            out += &serde_json::to_string(&Line::Step { schema_version: SCHEMA_VERSION, step: s }).expect("trace serializes");
            out.push('\n');
        }
        let end = Line::End { schema_version: SCHEMA_VERSION, outcome: &self.outcome, replan_count: self.replan_count, final_world: &self.final_world };
        out += &serde_json::to_string(&end).expect("trace serializes");
        out.push('\n');
        out
    }
}

fn column_of(world: &WorldState, block: BlockId) -> Result<Vec<BlockId>, SimError> {
    if !world.contains(block) {
        return Err(SimError::Inapplicable(format!("unknown block {block}")));
    }
    Ok(world.column_from(world.column_base(block)))
}

fn move_column(world: &mut WorldState, column: &[BlockId], to: Point) {
    for &b in column {
        let pose = &mut world.block_mut(b).pose;
        pose.x = to.x;
        pose.y = to.y;
    }
}

/// On the table and clear of every other column by [`MIN_GAP`].
fn valid(world: &WorldState, config: &PlannerConfig) -> bool {
    let ws = &config.workspace;
    world.check_consistency().is_ok()
        && world.table_blocks().all(|b| ws.table.holds(&b.pose.center(), ws.block_size))
        && world.min_table_gap() >= MIN_GAP
}

pub fn inject_disturbance(world: &WorldState, disturbance: &Disturbance, seed: u64, config: &PlannerConfig) -> Result<WorldState, SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut next = world.clone();
    match *disturbance {
        Disturbance::Displace { block, dx, dy } => {
            let col = column_of(world, block)?;
            let p = world.position(col[0]);
            move_column(&mut next, &col, Point::new(p.x + dx, p.y + dy));
            if !valid(&next, config) {
                return Err(SimError::Inapplicable(format!("displacing {block} leaves the table or overlaps")));
            }
        }
        Disturbance::Topple { block } => {
            let col = column_of(world, block)?;
            if col.len() < 2 {
                return Err(SimError::Inapplicable(format!("{block} is not in a stack")));
            }
            let base = world.position(col[0]);
            let l = config.workspace.block_size;
            // Columns already on the table; toppled blocks join as they land.
            let mut settled: Vec<BlockId> = world.table_blocks().map(|b| b.id).collect();
            for (i, &b) in col.iter().enumerate().skip(1) {
                let spot = (0..200).find_map(|_| {
                    let ang = rng.random_range(0.0..std::f64::consts::TAU);
                    let r = i as f64 * (l + 2.0 * MIN_GAP) + rng.random_range(0.0..l);
                    let at = Point::new(base.x + r * ang.cos(), base.y + r * ang.sin());
                    let mut trial = next.clone();
                    move_column(&mut trial, &[b], at);
                    trial.block_mut(b).support = Support::Table;
                    let clear = settled.iter().all(|&o| trial.footprint_gap(o, b) >= MIN_GAP);
                    (clear && config.workspace.table.holds(&at, l)).then_some(at)
                });
                let at = spot.ok_or_else(|| SimError::Inapplicable(format!("no room to topple {block}")))?;
                move_column(&mut next, &[b], at);
                next.block_mut(b).support = Support::Table;
                settled.push(b);
            }
        }
        Disturbance::ShuffleStack { block } => {
            let col = column_of(world, block)?;
            if col.len() < 2 {
                return Err(SimError::Inapplicable(format!("{block} is not in a stack")));
            }
            let mut order = col.clone();
            while order == col {
                order.shuffle(&mut rng);
            }
            let base = world.block(col[0]).pose;
            for (i, &b) in order.iter().enumerate() {
                let blk = next.block_mut(b);
                blk.support = if i == 0 { Support::Table } else { Support::Block(order[i - 1]) };
                blk.pose.x = base.x;
                blk.pose.y = base.y;
                blk.pose.theta = base.theta;
            }
        }
        Disturbance::PushOutOfReach { block, extra } => {
            let col = column_of(world, block)?;
            let reach = config.workspace.reach;
            let c = reach.center_point();
            let d = world.position(col[0]) - c;
            let heading = if d.norm() > 1e-9 { d.y.atan2(d.x) } else { rng.random_range(0.0..std::f64::consts::TAU) };
            let radius = reach.radius + extra;
            let found = (0..72).find_map(|k| {
                // 0, +5°, −5°, +10°, ...
                let step = ((k + 1) / 2) as f64 * if k % 2 == 1 { 1.0 } else { -1.0 };
                let ang = heading + step.to_radians() * 5.0;
                let at = Point::new(c.x + radius * ang.cos(), c.y + radius * ang.sin());
                let mut trial = next.clone();
                move_column(&mut trial, &col, at);
                (!reach.contains(&at) && valid(&trial, config)).then_some(trial)
            });
            next = found.ok_or_else(|| SimError::Inapplicable(format!("no free spot outside reach for {block}")))?;
        }
    }
    Ok(next)
}

/// Observation of `world`: every column shifted by independent Gaussian xy noise.
fn observe(world: &WorldState, noise_std: f64, rng: &mut ChaCha8Rng) -> WorldState {
    if noise_std == 0.0 {
        return world.clone();
    }
    let normal = Normal::new(0.0, noise_std).expect("finite noise");
    let mut obs = world.clone();
    let bases: Vec<BlockId> = world.table_blocks().map(|b| b.id).collect();
    for base in bases {
        let p = world.position(base);
        let at = Point::new(p.x + normal.sample(rng), p.y + normal.sample(rng));
        move_column(&mut obs, &world.column_from(base), at);
    }
    obs
}

pub fn closed_loop_run(scenario: &Scenario) -> Trace {
    let config = scenario.config();
    let goal = &scenario.goal;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let mut world = scenario.world0.clone();
    let mut steps = Vec::new();
    let mut replans = 0usize;
    let mut schedule = scenario.disturbances.iter().peekable();
    let finish = |steps, outcome, replans, world| Trace { steps, outcome, replan_count: replans, final_world: world };

    loop {
        let observed = observe(&world, scenario.noise_std, &mut rng);
        let s_obs = abstract_for(&observed, goal, &config);
        if goal.satisfied_levels(&s_obs) == goal.order.len() {
            let outcome = if goal.satisfied_by(&world, config.slot_tolerance) {
                Outcome::Success
            } else {
                Outcome::Failure("observation satisfies the goal but the world does not".into())
            };
            return finish(steps, outcome, replans, world);
        }
        if replans >= scenario.max_replans {
            return finish(steps, Outcome::Failure(format!("max replans ({}) exceeded", scenario.max_replans)), replans, world);
        }
        let plan = match dts_solve(&observed, goal, &config) {
            Ok(p) => p,
            Err(e) => return finish(steps, Outcome::Failure(format!("planner: {e}")), replans, world),
        };
        replans += 1;
        let action = plan.skeleton[0];
        let s = abstract_for(&world, goal, &config);
        if let Some(v) = check_preconditions(&s, &action) {
            return finish(steps, Outcome::Failure(format!("{action} not executable: {v}")), replans, world);
        }
        // Stacking snaps onto the real lower block.
        let at = match action.target {
            Target::GoalSlot { level } if level > 0 => slot_point(&world, &s, goal, level),
            _ => plan.keyframe(0),
        };
        world = apply_action(&world, &s, &action, &at);
        let executed = steps.len() + 1;
        let mut applied = None;
        if schedule.peek().is_some_and(|d| d.after_action == executed) {
            let d = schedule.next().expect("peeked");
            match inject_disturbance(&world, &d.disturbance, d.seed, &config) {
                Ok(w) => {
                    world = w;
                    applied = Some(d.disturbance.clone());
                }
                Err(e) => return finish(steps, Outcome::Failure(e.to_string()), replans, world),
            }
        }
        steps.push(TraceStep {
            iteration: steps.len(),
            observed,
            plan: plan.skeleton,
            keyframes: plan.keyframes,
            executed: action,
            disturbance: applied,
        });
    }
}

/// Number of tool pulls in `actions`.
pub fn count_pulls(actions: &[Action]) -> usize {
    actions.iter().filter(|a| a.kind == ActionKind::ToolPull).count()
}

/// The shipped tool-use scenario: four blocks to be stacked D, C, B, A; after
/// D is placed, C is pushed out of reach and has to be pulled back.
pub fn tool_push_scenario() -> Scenario {
    let workspace = Workspace { table: crate::world::TableBounds::centered(2.0, 2.0), ..Workspace::default() };
    let mut wb = WorldBuilder::new(workspace.block_size);
    let a = wb.on_table(-0.3, 0.2, SHORT_HEIGHT);
    let b = wb.on_table(0.0, 0.35, TALL_HEIGHT);
    let c = wb.on_table(0.45, 0.3, SHORT_HEIGHT);
    let d = wb.on_table(-0.4, -0.1, SHORT_HEIGHT);
    let world0 = wb.build();
    Scenario {
        schema_version: SCHEMA_VERSION,
        name: "tower-tool-push".into(),
        workspace,
        world0: world0.clone(),
        goal: GoalSpec::new(vec![d, c, b, a], (0.0, -0.3)),
        disturbances: vec![ScheduledDisturbance {
            after_action: 1,
            disturbance: Disturbance::PushOutOfReach { block: c, extra: 0.12 },
            seed: 3,
        }],
        noise_std: 0.0,
        max_replans: 6 * world0.len() + 6,
        seed: 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three_stack() -> (WorldState, BlockId) {
        let mut wb = WorldBuilder::new(0.05);
        let a = wb.on_table(0.0, 0.2, SHORT_HEIGHT);
        let b = wb.on_block(a, SHORT_HEIGHT);
        wb.on_block(b, SHORT_HEIGHT);
        wb.on_table(-0.3, -0.2, TALL_HEIGHT);
        (wb.build(), a)
    }

    #[test]
    fn zero_displacement_is_identity() {
        let cfg = PlannerConfig::default();
        let (w, a) = three_stack();
        let out = inject_disturbance(&w, &Disturbance::Displace { block: a, dx: 0.0, dy: 0.0 }, 0, &cfg).unwrap();
        assert_eq!(out, w);
    }

    #[test]
    fn push_leaves_reach() {
        let cfg = PlannerConfig::for_workspace(tool_push_scenario().workspace);
        let (w, a) = three_stack();
        let out = inject_disturbance(&w, &Disturbance::PushOutOfReach { block: a, extra: 0.1 }, 1, &cfg).unwrap();
        assert!(out.position(a).norm() > cfg.workspace.reach.radius);
        out.check_consistency().unwrap();
    }

    #[test]
    fn topple_lays_out_the_stack() {
        let cfg = PlannerConfig::default();
        let (w, a) = three_stack();
        for seed in 0..10 {
            let out = inject_disturbance(&w, &Disturbance::Topple { block: a }, seed, &cfg).unwrap();
            out.check_consistency().unwrap();
            assert_eq!(out.table_blocks().count(), 4);
            assert!(out.min_table_gap() >= MIN_GAP);
            assert_eq!(out.position(a), w.position(a));
        }
    }

    #[test]
    fn shuffle_needs_a_stack() {
        let cfg = PlannerConfig::default();
        let (w, _) = three_stack();
        let single = w.id_by_name("D").unwrap();
        assert!(matches!(
            inject_disturbance(&w, &Disturbance::ShuffleStack { block: single }, 0, &cfg),
            Err(SimError::Inapplicable(_))
        ));
    }

    #[test]
    fn shuffle_changes_order() {
        let cfg = PlannerConfig::default();
        let (w, a) = three_stack();
        let out = inject_disturbance(&w, &Disturbance::ShuffleStack { block: a }, 5, &cfg).unwrap();
        out.check_consistency().unwrap();
        assert_ne!(out.column_from(out.column_base(a)), w.column_from(a));
    }

    #[test]
    fn unsorted_triggers_are_rejected() {
        let mut sc = tool_push_scenario();
        let d = sc.disturbances[0].clone();
        sc.disturbances.push(d);
        assert!(sc.validate().is_err());
    }

    #[test]
    fn tool_scenario_recovers_with_one_pull() {
        let sc = tool_push_scenario();
        sc.validate().unwrap();
        let trace = closed_loop_run(&sc);
        assert!(trace.is_success(), "{:?}", trace.outcome);
        assert!(trace.steps[0].disturbance.is_some());
        assert_eq!(count_pulls(&trace.steps[0].plan), 0);
        assert_eq!(count_pulls(&trace.steps[1].plan), 1);
        let executed: Vec<Action> = trace.steps.iter().map(|s| s.executed).collect();
        assert_eq!(count_pulls(&executed), 1);
        assert_eq!(trace.to_jsonl(), closed_loop_run(&sc).to_jsonl());
    }

    #[test]
    fn undisturbed_run_replans_once_per_action() {
        let mut sc = tool_push_scenario();
        sc.disturbances.clear();
        let trace = closed_loop_run(&sc);
        assert!(trace.is_success());
        let open_loop = dts_solve(&sc.world0, &sc.goal, &sc.config()).unwrap();
        assert_eq!(trace.replan_count, open_loop.makespan);
    }
}
