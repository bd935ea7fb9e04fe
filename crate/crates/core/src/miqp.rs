//! Mixed-integer placement models and a best-first branch-and-bound solver.
//!
//! A placement must lie outside every obstacle: for each obstacle one of its
//! four complement halfspaces has to hold. Each such "one of four" choice is a
//! [`Disjunction`]. The convex part (table bounds, reach polygon) is a list of
//! plain rows.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};
use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{halfspaces_of_block, reach_halfspaces, BlockPose, Halfspace, Point, ReachRegion};
use crate::qp::{solve_qp, QpError, QpProblem, QpStatus, FEAS_TOL};
use crate::symbolic::{Action, ActionKind};
use crate::world::{BlockId, PlannerConfig, TableBounds, WorldState};

/// Convex rows are tightened by this much so that solutions on a boundary
/// still pass exact membership tests.
const BOUNDARY_EPS: f64 = 1e-8;

/// `coeffs · v ≥ rhs`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearRow {
    pub coeffs: DVector<f64>,
    pub rhs: f64,
}

impl LinearRow {
    pub fn new(coeffs: DVector<f64>, rhs: f64) -> Self {
        LinearRow { coeffs, rhs }
    }

    /// Row acting on the point variable starting at index `var`.
    pub fn on_point(h: &Halfspace, var: usize, dim: usize) -> Self {
        let n = h.normal();
        let mut coeffs = DVector::zeros(dim);
        coeffs[var] = n.x;
        coeffs[var + 1] = n.y;
        LinearRow { coeffs, rhs: h.c }
    }

    pub fn slack(&self, v: &DVector<f64>) -> f64 {
        self.coeffs.dot(v) - self.rhs
    }
}

/// Exactly one of four rows must hold.
#[derive(Clone, Debug, PartialEq)]
pub struct Disjunction {
    pub branches: [LinearRow; 4],
    pub big_m: f64,
    pub label: String,
}

impl Disjunction {
    /// Keep the point variable at `var` outside the block footprint inflated by `margin`.
    pub fn around_block(pose: &BlockPose, margin: f64, var: usize, dim: usize, big_m: f64, label: String) -> Self {
        let hs = halfspaces_of_block(pose, margin);
        Disjunction {
            branches: hs.map(|h| LinearRow::on_point(&h, var, dim)),
            big_m,
            label,
        }
    }

    /// Axis-aligned separation `|u_i − u_j|_∞ ≥ offset` between two point variables.
    pub fn separation(var_i: usize, var_j: usize, offset: f64, dim: usize, big_m: f64, label: String) -> Self {
        let row = |axis: usize, sign: f64| {
            let mut c = DVector::zeros(dim);
            c[var_i + axis] = sign;
            c[var_j + axis] = -sign;
            LinearRow::new(c, offset)
        };
        Disjunction {
            branches: [row(0, 1.0), row(0, -1.0), row(1, 1.0), row(1, -1.0)],
            big_m,
            label,
        }
    }

    /// Largest branch slack; nonnegative means the disjunction holds.
    pub fn best_slack(&self, v: &DVector<f64>) -> (usize, f64) {
        let mut best = (0, f64::NEG_INFINITY);
        for (k, r) in self.branches.iter().enumerate() {
            let s = r.slack(v);
            if s > best.1 {
                best = (k, s);
            }
        }
        best
    }
}

#[derive(Clone, Debug)]
pub struct MiqpModel {
    /// Objective `½vᵀQv + qᵀv + offset`, plus any equality rows.
    pub objective: QpProblem,
    pub convex: Vec<LinearRow>,
    pub disjunctions: Vec<Disjunction>,
    pub node_budget: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MiqpStatus {
    Optimal,
    Infeasible,
}

#[derive(Clone, Debug)]
pub struct MiqpResult {
    pub status: MiqpStatus,
    pub u: DVector<f64>,
    pub objective: f64,
    pub nodes_expanded: usize,
    /// Selected branch per disjunction (empty when infeasible).
    pub fixed_binaries: Vec<usize>,
}

impl MiqpResult {
    pub fn point(&self, var: usize) -> Point {
        Point::new(self.u[var], self.u[var + 1])
    }

    pub fn is_optimal(&self) -> bool {
        self.status == MiqpStatus::Optimal
    }
}

#[derive(Debug, Error)]
pub enum MiqpError {
    #[error("unknown block {0}")]
    UnknownBlock(BlockId),
    #[error("action has a fixed target; nothing to optimize")]
    DegenerateModel,
    #[error("block {0} is already inside reach")]
    AlreadyReachable(BlockId),
    #[error("node budget exceeded after {nodes} nodes")]
    NodeBudgetExceeded { nodes: usize },
    #[error("relaxation failed: {0}")]
    Solver(#[from] QpError),
}

/// Region a placement must avoid: a block footprint inflated by `margin`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeepOut {
    pub pose: BlockPose,
    pub margin: f64,
}

impl MiqpModel {
    pub fn dim(&self) -> usize {
        self.objective.dim()
    }

    /// `‖u − anchor‖²` over a single point variable, no constraints yet.
    pub fn point_objective(anchor: &Point, node_budget: usize) -> Self {
        let q = DMatrix::identity(2, 2) * 2.0;
        let qv = DVector::from_vec(vec![-2.0 * anchor.x, -2.0 * anchor.y]);
        MiqpModel {
            objective: QpProblem::new(q, qv).with_offset(anchor.norm_squared()),
            convex: Vec::new(),
            disjunctions: Vec::new(),
            node_budget,
        }
    }

    pub fn add_table_rows(&mut self, table: &TableBounds, l: f64, var: usize) {
        let dim = self.dim();
        let h = l / 2.0;
        for (axis, sign, bound) in [
            (0, 1.0, table.x_min + h),
            (0, -1.0, -(table.x_max - h)),
            (1, 1.0, table.y_min + h),
            (1, -1.0, -(table.y_max - h)),
        ] {
            let mut c = DVector::zeros(dim);
            c[var + axis] = sign;
            self.convex.push(LinearRow::new(c, bound + BOUNDARY_EPS));
        }
    }

    pub fn add_reach_rows(&mut self, reach: &ReachRegion, var: usize) {
        let dim = self.dim();
        for h in reach_halfspaces(reach) {
            let mut row = LinearRow::on_point(&h, var, dim);
            row.rhs += BOUNDARY_EPS;
            self.convex.push(row);
        }
    }

    /// Node relaxation with the listed disjunctions fixed to one branch. With
    /// a vacuous big-M the relaxed rows of unfixed disjunctions impose nothing
    /// on `u`, so they are dropped rather than lifted.
    pub fn relaxation(&self, fixed: &[(usize, usize)]) -> QpProblem {
        let rows: Vec<&LinearRow> = self
            .convex
            .iter()
            .chain(fixed.iter().map(|&(d, k)| &self.disjunctions[d].branches[k]))
            .collect();
        let n = self.dim();
        let mut a = DMatrix::zeros(rows.len(), n);
        let mut b = DVector::zeros(rows.len());
        for (i, r) in rows.iter().enumerate() {
            a.set_row(i, &r.coeffs.transpose());
            b[i] = r.rhs;
        }
        let mut p = self.objective.clone();
        p.a_in = a;
        p.b_in = b;
        p
    }

    /// Classical big-M relaxation over `(u, z)`: each branch row becomes
    /// `coeffs·u + M(1 − z_k) ≥ rhs`, `Σ z = 1`, `0 ≤ z ≤ 1`, with fixed
    /// disjunctions pinned to their branch.
    pub fn big_m_relaxation(&self, fixed: &[(usize, usize)]) -> QpProblem {
        let n = self.dim();
        let nz = 4 * self.disjunctions.len();
        let total = n + nz;
        let mut q = DMatrix::zeros(total, total);
        q.view_mut((0, 0), (n, n)).copy_from(&self.objective.q_mat);
        let mut qv = DVector::zeros(total);
        qv.rows_mut(0, n).copy_from(&self.objective.q_vec);

        let mut rows: Vec<(DVector<f64>, f64)> = Vec::new();
        let lift = |c: &DVector<f64>| {
            let mut v = DVector::zeros(total);
            v.rows_mut(0, n).copy_from(c);
            v
        };
        for r in &self.convex {
            rows.push((lift(&r.coeffs), r.rhs));
        }
        for (d, disj) in self.disjunctions.iter().enumerate() {
            for (k, br) in disj.branches.iter().enumerate() {
                let zi = n + 4 * d + k;
                let mut v = lift(&br.coeffs);
                v[zi] = -disj.big_m;
                rows.push((v, br.rhs - disj.big_m));
                let mut lo = DVector::zeros(total);
                lo[zi] = 1.0;
                rows.push((lo.clone(), 0.0));
                rows.push((-lo, -1.0));
            }
        }
        let mut a = DMatrix::zeros(rows.len(), total);
        let mut b = DVector::zeros(rows.len());
        for (i, (c, r)) in rows.iter().enumerate() {
            a.set_row(i, &c.transpose());
            b[i] = *r;
        }

        let ne0 = self.objective.a_eq.nrows();
        let neq = ne0 + self.disjunctions.len() + fixed.len();
        let mut ae = DMatrix::zeros(neq, total);
        let mut be = DVector::zeros(neq);
        for i in 0..ne0 {
            ae.view_mut((i, 0), (1, n)).copy_from(&self.objective.a_eq.row(i));
            be[i] = self.objective.b_eq[i];
        }
        for d in 0..self.disjunctions.len() {
            for k in 0..4 {
                ae[(ne0 + d, n + 4 * d + k)] = 1.0;
            }
            be[ne0 + d] = 1.0;
        }
        for (i, &(d, k)) in fixed.iter().enumerate() {
            ae[(ne0 + self.disjunctions.len() + i, n + 4 * d + k)] = 1.0;
            be[ne0 + self.disjunctions.len() + i] = 1.0;
        }
        QpProblem::new(q, qv)
            .with_offset(self.objective.offset)
            .with_inequalities(a, b)
            .with_equalities(ae, be)
    }
}

impl fmt::Display for MiqpModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let fmt_row = |r: &LinearRow| {
            let terms: Vec<String> = r
                .coeffs
                .iter()
                .enumerate()
                .filter(|(_, c)| **c != 0.0)
                .map(|(i, c)| format!("{c:+.6}*v{i}"))
                .collect();
            format!("{} >= {:.6}", terms.join(" "), r.rhs)
        };
        let o = &self.objective;
        writeln!(f, "dim {}", self.dim())?;
        writeln!(f, "objective offset {:.6}", o.offset)?;
        for i in 0..o.dim() {
            let row: Vec<String> = o.q_mat.row(i).iter().map(|v| format!("{v:.6}")).collect();
            writeln!(f, "Q[{i}] {}  q[{i}] {:.6}", row.join(" "), o.q_vec[i])?;
        }
        for i in 0..o.a_eq.nrows() {
            let row: Vec<String> = o.a_eq.row(i).iter().map(|v| format!("{v:.6}")).collect();
            writeln!(f, "eq {} = {:.6}", row.join(" "), o.b_eq[i])?;
        }
        for r in &self.convex {
            writeln!(f, "convex {}", fmt_row(r))?;
        }
        for (d, disj) in self.disjunctions.iter().enumerate() {
            writeln!(f, "disjunction {d} {} M={:.6}", disj.label, disj.big_m)?;
            for (k, r) in disj.branches.iter().enumerate() {
                writeln!(f, "  z{k}: {}", fmt_row(r))?;
            }
        }
        Ok(())
    }
}

struct Node {
    bound: f64,
    seq: usize,
    fixed: Vec<(usize, usize)>,
    v: DVector<f64>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // BinaryHeap is a max-heap: smaller bound, then earlier insertion, wins.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Global minimum over all branch selections.
///
/// Nodes are explored best-first by relaxation bound. Branching fixes the
/// most violated unfixed disjunction to each of its four rows. A node whose
/// relaxed optimum already satisfies every unfixed disjunction is integral.
/// `nodes_expanded` counts relaxation solves.
pub fn branch_and_bound(model: &MiqpModel) -> Result<MiqpResult, MiqpError> {
    branch_and_bound_from(model, None)
}

/// Whether `u` satisfies every convex row and every disjunction of `model`.
pub fn is_model_feasible(model: &MiqpModel, u: &DVector<f64>) -> bool {
    u.len() == model.dim()
        && model.convex.iter().all(|r| r.slack(u) >= -FEAS_TOL)
        && model.disjunctions.iter().all(|d| d.best_slack(u).1 >= -FEAS_TOL)
}

/// Branch-and-bound seeded with a known feasible point. Nodes whose bound is
/// not below the start's objective are pruned from the beginning; if nothing
/// better exists the start itself is returned as optimal. An infeasible start
/// is ignored.
pub fn branch_and_bound_from(model: &MiqpModel, start: Option<&DVector<f64>>) -> Result<MiqpResult, MiqpError> {
    let mut nodes = 0usize;
    let solve = |fixed: &[(usize, usize)], nodes: &mut usize| -> Result<Option<(f64, DVector<f64>)>, MiqpError> {
        *nodes += 1;
        let sol = solve_qp(&model.relaxation(fixed))?;
        Ok(match sol.status {
            QpStatus::Optimal => Some((sol.objective, sol.v)),
            QpStatus::Infeasible => None,
            QpStatus::Unbounded => unreachable!("placement objectives are bounded below"),
        })
    };

    let mut heap = BinaryHeap::new();
    let mut seen: HashSet<Vec<(usize, usize)>> = HashSet::new();
    let mut seq = 0usize;
    let mut best: Option<(f64, DVector<f64>, Vec<(usize, usize)>)> = start
        .filter(|u| is_model_feasible(model, u))
        .map(|u| (model.objective.objective(u), u.clone(), Vec::new()));
    if let Some((bound, v)) = solve(&[], &mut nodes)? {
        heap.push(Node { bound, seq, fixed: Vec::new(), v });
        seq += 1;
    }

    while let Some(node) = heap.pop() {
        if let Some((inc, _, _)) = &best {
            if node.bound >= *inc - 1e-12 * (1.0 + inc.abs()) {
                break;
            }
        }
        // Most violated unfixed disjunction, lowest index on ties.
        let mut branch_on: Option<(usize, f64)> = None;
        for (d, disj) in model.disjunctions.iter().enumerate() {
            if node.fixed.iter().any(|&(fd, _)| fd == d) {
                continue;
            }
            let (_, slack) = disj.best_slack(&node.v);
            if slack < -FEAS_TOL && branch_on.is_none_or(|(_, s)| slack < s) {
                branch_on = Some((d, slack));
            }
        }
        let Some((d, _)) = branch_on else {
            best = Some((node.bound, node.v, node.fixed));
            continue;
        };
        for k in 0..4 {
            let mut fixed = node.fixed.clone();
            fixed.push((d, k));
            fixed.sort_unstable();
            if !seen.insert(fixed.clone()) {
                continue;
            }
            if nodes >= model.node_budget {
                return Err(MiqpError::NodeBudgetExceeded { nodes });
            }
            if let Some((bound, v)) = solve(&fixed, &mut nodes)? {
                let dominated = best
                    .as_ref()
                    .is_some_and(|(inc, _, _)| bound >= *inc - 1e-12 * (1.0 + inc.abs()));
                if !dominated {
                    heap.push(Node { bound, seq, fixed, v });
                    seq += 1;
                }
            }
        }
    }

    Ok(match best {
        Some((objective, u, fixed)) => {
            let fixed_binaries = model
                .disjunctions
                .iter()
                .enumerate()
                .map(|(d, disj)| {
                    fixed
                        .iter()
                        .find(|&&(fd, _)| fd == d)
                        .map(|&(_, k)| k)
                        .unwrap_or_else(|| disj.best_slack(&u).0)
                })
                .collect();
            MiqpResult { status: MiqpStatus::Optimal, u, objective, nodes_expanded: nodes, fixed_binaries }
        }
        None => MiqpResult {
            status: MiqpStatus::Infeasible,
            u: DVector::zeros(0),
            objective: f64::INFINITY,
            nodes_expanded: nodes,
            fixed_binaries: Vec::new(),
        },
    })
}

fn add_obstacles(model: &mut MiqpModel, world: &WorldState, moved: BlockId, keepouts: &[KeepOut], config: &PlannerConfig) {
    let dim = model.dim();
    let m = config.big_m();
    for b in world.table_blocks().filter(|b| b.id != moved) {
        model.disjunctions.push(Disjunction::around_block(
            &b.pose,
            config.obstacle_margin,
            0,
            dim,
            m,
            format!("block {}", b.id),
        ));
    }
    for (i, k) in keepouts.iter().enumerate() {
        model
            .disjunctions
            .push(Disjunction::around_block(&k.pose, k.margin, 0, dim, m, format!("keep-out {i}")));
    }
}

/// Single-phase placement model for an action with a free target: minimize
/// squared travel from `ee_from` while staying on the table, inside reach and
/// outside every other table column and keep-out.
pub fn build_placement_model(
    world: &WorldState,
    action: &Action,
    keepouts: &[KeepOut],
    ee_from: &Point,
    config: &PlannerConfig,
) -> Result<MiqpModel, MiqpError> {
    if !world.contains(action.block) {
        return Err(MiqpError::UnknownBlock(action.block));
    }
    if action.kind == ActionKind::ToolPull {
        return build_pull_model(world, action.block, keepouts, config);
    }
    if !action.has_free_placement() {
        return Err(MiqpError::DegenerateModel);
    }
    let ws = &config.workspace;
    let mut model = MiqpModel::point_objective(ee_from, config.node_budget);
    model.add_table_rows(&ws.table, ws.block_size, 0);
    model.add_reach_rows(&ws.reach, 0);
    add_obstacles(&mut model, world, action.block, keepouts, config);
    Ok(model)
}

/// Pull target for an out-of-reach block: the closest point inside the reach
/// polygon, clear of other columns. The block is grasped again where it lands,
/// so the pull distance is the whole cost.
pub fn build_pull_model(
    world: &WorldState,
    block: BlockId,
    keepouts: &[KeepOut],
    config: &PlannerConfig,
) -> Result<MiqpModel, MiqpError> {
    if !world.contains(block) {
        return Err(MiqpError::UnknownBlock(block));
    }
    let ws = &config.workspace;
    let pos = world.position(block);
    if ws.reach.contains(&pos) {
        return Err(MiqpError::AlreadyReachable(block));
    }
    let mut model = MiqpModel::point_objective(&pos, config.node_budget);
    model.add_table_rows(&ws.table, ws.block_size, 0);
    model.add_reach_rows(&ws.reach, 0);
    add_obstacles(&mut model, world, block, keepouts, config);
    Ok(model)
}
