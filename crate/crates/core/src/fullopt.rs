//! Joint re-optimization of every free placement of a fixed skeleton.
//!
//! Each free placement (relocation or pull target) becomes a point variable.
//! The stacking structure of the plan is kept, so the table columns present
//! after every step are known; only the positions of variable columns move.
//! Constraints reproduce what execution checks: columns never overlap, a block
//! about to be picked has no taller column within grasp clearance, and
//! variables stay on the table, inside reach and off the goal zone.
//!
//! Travel is a sum of Euclidean leg lengths, which is not quadratic. The
//! model minimizes weighted squared legs and re-weights each leg by the
//! inverse of its current length, keeping the best plan found.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::geometry::{BlockPose, Point};
use crate::miqp::{branch_and_bound_from, Disjunction, MiqpError, MiqpModel};
use crate::planner::{apply_action, replay, Plan, PlanStage};
use crate::symbolic::{GoalSpec, Target};
use crate::world::{BlockId, PlannerConfig, WorldState};

const IRLS_ROUNDS: usize = 8;
const MIN_LEG: f64 = 1e-3;
const EPS: f64 = 1e-6;

/// A pick or place point: fixed, or the `i`-th variable.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PointRef {
    Fixed(Point),
    Var(usize),
}

#[derive(Clone, Debug)]
pub struct SequenceModel {
    /// Step index of each variable.
    pub free_steps: Vec<usize>,
    /// Per variable, the steps `[placed, picked_again)` during which it
    /// occupies its placement (`picked_again = K` if never picked again).
    pub occupancy: Vec<(usize, usize)>,
    pub n_static: usize,
    pub n_pairwise: usize,
    /// Travel legs in execution order.
    pub legs: Vec<(PointRef, PointRef)>,
    /// Constraints with the objective left empty.
    pub constraints: MiqpModel,
}

impl SequenceModel {
    pub fn n_vars(&self) -> usize {
        self.free_steps.len()
    }

    /// Model with objective `Σ w_i ‖leg_i‖²`.
    pub fn weighted(&self, weights: &[f64]) -> MiqpModel {
        let n = 2 * self.n_vars();
        let mut q = DMatrix::zeros(n, n);
        let mut qv = DVector::zeros(n);
        let mut offset = 0.0;
        for (leg, &w) in self.legs.iter().zip(weights) {
            // diff = (a - b) per axis as (var coefficients, constant)
            for axis in 0..2 {
                let mut coef: BTreeMap<usize, f64> = BTreeMap::new();
                let mut c = 0.0;
                for (r, sign) in [(leg.0, 1.0), (leg.1, -1.0)] {
                    match r {
                        PointRef::Fixed(p) => c += sign * p[axis],
                        PointRef::Var(i) => *coef.entry(2 * i + axis).or_default() += sign,
                    }
                }
                for (&i, &ci) in &coef {
                    for (&j, &cj) in &coef {
                        q[(i, j)] += 2.0 * w * ci * cj;
                    }
                    qv[i] += 2.0 * w * ci * c;
                }
                offset += w * c * c;
            }
        }
        let mut m = self.constraints.clone();
        m.objective.q_mat = q;
        m.objective.q_vec = qv;
        m.objective.offset = offset;
        m
    }

    pub fn resolve(&self, r: &PointRef, u: &DVector<f64>) -> Point {
        match *r {
            PointRef::Fixed(p) => p,
            PointRef::Var(i) => Point::new(u[2 * i], u[2 * i + 1]),
        }
    }

    pub fn displacement(&self, u: &DVector<f64>) -> f64 {
        self.legs
            .iter()
            .map(|(a, b)| (self.resolve(a, u) - self.resolve(b, u)).norm())
            .sum()
    }
}

/// Column entity on the table at some time: a fixed pose or a variable.
#[derive(Clone, Copy)]
enum Column {
    Fixed(BlockPose),
    Var(usize),
}

/// Sequence model for the free placements of `plan`.
pub fn build_sequence_model(plan: &Plan, world0: &WorldState, goal: &GoalSpec, config: &PlannerConfig) -> SequenceModel {
    let k_total = plan.skeleton.len();
    let worlds: Vec<WorldState> = if plan.worlds.len() == k_total + 1 {
        plan.worlds.clone()
    } else {
        let mut ws = vec![world0.clone()];
        for (k, a) in plan.skeleton.iter().enumerate() {
            let w = ws.last().unwrap();
            let s = crate::planner::abstract_for(w, goal, config);
            ws.push(apply_action(w, &s, a, &plan.keyframe(k)));
        }
        ws
    };

    let free_steps: Vec<usize> = (0..k_total)
        .filter(|&k| plan.skeleton[k].has_free_placement())
        .collect();
    let var_of_step: BTreeMap<usize, usize> = free_steps.iter().enumerate().map(|(i, &k)| (k, i)).collect();
    // Current point reference of every block, advanced step by step.
    let mut where_is: BTreeMap<BlockId, PointRef> = world0.blocks.iter().map(|b| (b.id, PointRef::Fixed(b.pose.center()))).collect();
    let mut legs = Vec::new();
    let mut occupancy = vec![(0, k_total); free_steps.len()];
    let mut prev_place: Option<PointRef> = None;
    // Which variable, if any, a table column base currently sits at.
    let mut base_var: BTreeMap<BlockId, usize> = BTreeMap::new();
    let mut column_refs: Vec<Vec<(BlockId, Column, f64)>> = Vec::new();
    let column_snapshot = |w: &WorldState, base_var: &BTreeMap<BlockId, usize>| -> Vec<(BlockId, Column, f64)> {
        w.table_blocks()
            .map(|b| {
                let col = match base_var.get(&b.id) {
                    Some(&v) => Column::Var(v),
                    None => Column::Fixed(b.pose),
                };
                (b.id, col, w.column_height(b.id))
            })
            .collect()
    };
    column_refs.push(column_snapshot(&worlds[0], &base_var));

    for (k, a) in plan.skeleton.iter().enumerate() {
        let pick = where_is[&a.block];
        if let PointRef::Var(v) = pick {
            occupancy[v].1 = k;
        }
        if let Some(p) = prev_place {
            legs.push((p, pick));
        }
        let place = match a.target {
            Target::GoalSlot { .. } => PointRef::Fixed(plan.keyframe(k)),
            _ => PointRef::Var(var_of_step[&k]),
        };
        legs.push((pick, place));
        prev_place = Some(place);
        where_is.insert(a.block, place);
        base_var.remove(&a.block);
        if let PointRef::Var(v) = place {
            occupancy[v].0 = k;
            base_var.insert(a.block, v);
        }
        column_refs.push(column_snapshot(&worlds[k + 1], &base_var));
    }

    let l = config.workspace.block_size;
    let overlap_margin = config.obstacle_margin;
    let clear_margin = l / 2.0 + config.grasp_clearance + EPS;
    // (var, fixed pose) -> margin, and (var, var) -> offset
    let slot = goal.target_point();
    let slot_pose = BlockPose::axis_aligned(slot.x, slot.y, l, l);
    let mut statics: Vec<(usize, BlockPose, f64)> = (0..free_steps.len()).map(|v| (v, slot_pose, clear_margin)).collect();
    let mut pairs: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut require = |a: &Column, b: &Column, margin: f64, statics: &mut Vec<(usize, BlockPose, f64)>| match (*a, *b) {
        (Column::Fixed(_), Column::Fixed(_)) => {}
        (Column::Var(v), Column::Fixed(p)) | (Column::Fixed(p), Column::Var(v)) => {
            match statics
                .iter_mut()
                .find(|(sv, sp, _)| *sv == v && (sp.center() - p.center()).norm() < 1e-9 && (sp.theta - p.theta).abs() < 1e-12)
            {
                Some(entry) => entry.2 = entry.2.max(margin),
                None => statics.push((v, p, margin)),
            }
        }
        (Column::Var(v), Column::Var(w)) if v != w => {
            let key = (v.min(w), v.max(w));
            let e = pairs.entry(key).or_insert(0.0);
            *e = e.max(l / 2.0 + margin);
        }
        _ => {}
    };

    for cols in &column_refs {
        for i in 0..cols.len() {
            for j in i + 1..cols.len() {
                require(&cols[i].1, &cols[j].1, overlap_margin, &mut statics);
            }
        }
    }
    // Grasp clearance of every pick, in the world just before it.
    for (k, a) in plan.skeleton.iter().enumerate() {
        if a.kind == crate::symbolic::ActionKind::ToolPull {
            continue;
        }
        let w = &worlds[k];
        let my_base = w.column_base(a.block);
        let my_top = w.z_top(a.block);
        let cols = &column_refs[k];
        let Some(mine) = cols.iter().find(|c| c.0 == my_base) else { continue };
        for c in cols.iter().filter(|c| c.0 != my_base && c.2 > my_top + 1e-9) {
            require(&mine.1, &c.1, clear_margin, &mut statics);
        }
    }

    let n = 2 * free_steps.len();
    let mut constraints = MiqpModel {
        objective: crate::qp::QpProblem::new(DMatrix::zeros(n, n), DVector::zeros(n)),
        convex: Vec::new(),
        disjunctions: Vec::new(),
        node_budget: config.level2_node_budget,
    };
    let big_m = config.big_m();
    for v in 0..free_steps.len() {
        constraints.add_table_rows(&config.workspace.table, l, 2 * v);
        constraints.add_reach_rows(&config.workspace.reach, 2 * v);
    }
    let n_static = statics.len();
    for (v, pose, margin) in &statics {
        constraints
            .disjunctions
            .push(Disjunction::around_block(pose, *margin, 2 * v, n, big_m, format!("u{v} static")));
    }
    for (&(v, w), &offset) in &pairs {
        constraints
            .disjunctions
            .push(Disjunction::separation(2 * v, 2 * w, offset, n, big_m, format!("u{v} u{w}")));
    }
    SequenceModel {
        free_steps,
        occupancy,
        n_static,
        n_pairwise: pairs.len(),
        legs,
        constraints,
    }
}

/// Drops disjunctions that cannot be violated by any point with objective at
/// most `bound`. That sublevel set is an ellipsoid around the unconstrained
/// minimizer; a disjunction with one branch holding on the whole ellipsoid is
/// never branched on and never cuts a point the search could return.
pub fn prune_inactive(model: &mut MiqpModel, bound: f64) -> usize {
    let p = &model.objective;
    let Some(chol) = p.q_mat.clone().cholesky() else { return 0 };
    let center = chol.solve(&(-&p.q_vec));
    let radius_sq = 2.0 * (bound - p.objective(&center));
    if radius_sq < 0.0 {
        return 0;
    }
    let before = model.disjunctions.len();
    model.disjunctions.retain(|d| {
        !d.branches.iter().any(|b| {
            let spread = (radius_sq * b.coeffs.dot(&chol.solve(&b.coeffs))).max(0.0).sqrt();
            b.coeffs.dot(&center) - spread >= b.rhs
        })
    });
    before - model.disjunctions.len()
}

/// Rebuilds a plan from new free-placement values, keeping the skeleton.
fn plan_with(plan: &Plan, model: &SequenceModel, u: &DVector<f64>, world0: &WorldState, goal: &GoalSpec, config: &PlannerConfig) -> Plan {
    let mut keyframes = plan.keyframes.clone();
    for (v, &k) in model.free_steps.iter().enumerate() {
        keyframes[k] = [u[2 * v], u[2 * v + 1]];
    }
    let mut worlds = vec![world0.clone()];
    for (k, a) in plan.skeleton.iter().enumerate() {
        let w = worlds.last().unwrap();
        let s = crate::planner::abstract_for(w, goal, config);
        let at = Point::new(keyframes[k][0], keyframes[k][1]);
        worlds.push(apply_action(w, &s, a, &at));
    }
    Plan {
        makespan: plan.makespan,
        nodes_visited: plan.nodes_visited,
        ..Plan::from_steps(plan.skeleton.clone(), keyframes, worlds, 0, plan.phase_duration, PlanStage::Refined)
    }
}

/// Re-optimizes every placement of `plan` jointly. Returns a plan with the same skeleton and travel no larger than
/// the input; if no better executable plan is found (or the node budget runs
/// out) the input is returned tagged [`PlanStage::Unrefined`].
pub fn optimize_full(plan: &Plan, world0: &WorldState, goal: &GoalSpec, config: &PlannerConfig) -> Plan {
    let unrefined = || Plan { stage: PlanStage::Unrefined, ..plan.clone() };
    let model = build_sequence_model(plan, world0, goal, config);
    if model.n_vars() == 0 {
        return Plan { stage: PlanStage::Refined, ..plan.clone() };
    }
    let mut current = DVector::zeros(2 * model.n_vars());
    for (v, &k) in model.free_steps.iter().enumerate() {
        current[2 * v] = plan.keyframes[k][0];
        current[2 * v + 1] = plan.keyframes[k][1];
    }
    let mut best: Option<Plan> = None;
    let mut budget = config.level2_node_budget;
    let mut last = f64::INFINITY;
    for _ in 0..IRLS_ROUNDS {
        let weights: Vec<f64> = model
            .legs
            .iter()
            .map(|(a, b)| 1.0 / (model.resolve(a, &current) - model.resolve(b, &current)).norm().max(MIN_LEG))
            .collect();
        let mut m = model.weighted(&weights);
        m.node_budget = budget;
        let start_value = m.objective.objective(&current);
        prune_inactive(&mut m, start_value);
        let r = match branch_and_bound_from(&m, Some(&current)) {
            Ok(r) if r.is_optimal() => r,
            Ok(_) | Err(MiqpError::NodeBudgetExceeded { .. }) | Err(_) => break,
        };
        budget = budget.saturating_sub(r.nodes_expanded);
        current = r.u;
        let cand = plan_with(plan, &model, &current, world0, goal, config);
        let disp = cand.ee_displacement;
        if replay(world0, goal, &cand, config).is_ok()
            && disp <= plan.ee_displacement + 1e-9
            && best.as_ref().is_none_or(|b| disp < b.ee_displacement)
        {
            best = Some(cand);
        }
        if (last - disp).abs() < 1e-9 {
            break;
        }
        last = disp;
    }
    best.unwrap_or_else(unrefined)
}
