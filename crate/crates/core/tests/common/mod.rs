//! Independent oracles shared by the integration and acceptance suites.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, SVD};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tamp_core::geometry::{BlockPose, Point};
use tamp_core::miqp::{branch_and_bound, build_placement_model, is_model_feasible, MiqpModel};
use tamp_core::qp::{kkt_residual, solve_qp, QpProblem, STAT_TOL};
use tamp_core::symbolic::Action;
use tamp_core::world::{PlannerConfig, TableBounds, WorldBuilder, WorldState, Workspace, SHORT_HEIGHT, TALL_HEIGHT};

/// Random convex QP with box constraints (always feasible and bounded) plus
/// an optional extra cutting row through the box interior.
pub fn random_box_qp<R: Rng>(rng: &mut R) -> QpProblem {
    let n: usize = rng.random_range(1..=4);
    let rank = if rng.random_bool(0.25) { n.saturating_sub(1).max(1) } else { n };
    let b = DMatrix::from_fn(rank, n, |_, _| rng.random_range(-2.0..2.0));
    let q_mat = b.transpose() * &b;
    let q_vec = DVector::from_fn(n, |_, _| rng.random_range(-3.0..3.0));
    let extra = rng.random_bool(0.5);
    let m = 2 * n + extra as usize;
    let mut a = DMatrix::zeros(m, n);
    let mut rhs = DVector::zeros(m);
    let mut interior = DVector::zeros(n);
    for i in 0..n {
        let lo = rng.random_range(-1.5..0.0);
        let hi = lo + rng.random_range(0.2..2.0);
        a[(2 * i, i)] = 1.0;
        rhs[2 * i] = lo;
        a[(2 * i + 1, i)] = -1.0;
        rhs[2 * i + 1] = -hi;
        interior[i] = 0.5 * (lo + hi);
    }
    if extra {
        let row = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        for j in 0..n {
            a[(2 * n, j)] = row[j];
        }
        rhs[2 * n] = row.dot(&interior) - rng.random_range(0.0..0.3);
    }
    QpProblem::new(q_mat, q_vec).with_inequalities(a, rhs)
}

/// Exhaustive active-set enumeration: for every subset of at most `n` rows,
/// solve the equality-constrained KKT system and keep the best feasible point.
pub fn enumerate_active_sets(p: &QpProblem) -> (f64, DVector<f64>) {
    let n = p.dim();
    let m = p.a_in.nrows();
    let mut best = (f64::INFINITY, DVector::zeros(n));
    for mask in 0u32..(1 << m) {
        let rows: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
        if rows.len() > n {
            continue;
        }
        let k = rows.len();
        let mut kkt = DMatrix::zeros(n + k, n + k);
        let mut rhs = DVector::zeros(n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(&p.q_mat);
        for i in 0..n {
            rhs[i] = -p.q_vec[i];
        }
        for (r, &row) in rows.iter().enumerate() {
            for j in 0..n {
                kkt[(j, n + r)] = -p.a_in[(row, j)];
                kkt[(n + r, j)] = p.a_in[(row, j)];
            }
            rhs[n + r] = p.b_in[row];
        }
        let svd = SVD::new(kkt.clone(), true, true);
        let Ok(sol) = svd.solve(&rhs, 1e-12) else { continue };
        if (&kkt * &sol - &rhs).amax() > 1e-9 {
            continue;
        }
        let v = sol.rows(0, n).into_owned();
        if p.max_violation(&v) > 1e-9 {
            continue;
        }
        let f = p.objective(&v);
        if f < best.0 {
            best = (f, v);
        }
    }
    best
}

/// Random placement problem: a table of random size, the block to move and
/// one to three obstacle columns at random poses.
pub struct PlacementCase {
    pub world: WorldState,
    pub action: Action,
    pub config: PlannerConfig,
    pub model: MiqpModel,
    pub anchor: Point,
}

pub fn random_placement<R: Rng>(rng: &mut R) -> PlacementCase {
    let (w, d) = (rng.random_range(0.12..1.0), rng.random_range(0.12..1.0));
    let workspace = Workspace { table: TableBounds::centered(w, d), ..Workspace::default() };
    let config = PlannerConfig::for_workspace(workspace);
    let h = workspace.block_size / 2.0;
    let on_table = |rng: &mut R| (rng.random_range(-w / 2.0 + h..w / 2.0 - h), rng.random_range(-d / 2.0 + h..d / 2.0 - h));
    let mut wb = WorldBuilder::new(workspace.block_size);
    let (x, y) = on_table(rng);
    let moved = wb.on_table(x, y, SHORT_HEIGHT);
    for _ in 0..rng.random_range(1..=3) {
        let (x, y) = on_table(rng);
        wb.on_table_rotated(x, y, rng.random_range(0.0..std::f64::consts::FRAC_PI_2), TALL_HEIGHT);
    }
    let world = wb.build();
    let action = Action::relocate(moved);
    let anchor = world.position(moved);
    let model = build_placement_model(&world, &action, &[], &anchor, &config).unwrap();
    PlacementCase { world, action, config, model, anchor }
}

/// A table one block deep where two obstacles flanking the moved block cover
/// every admissible center: always infeasible.
pub fn sealed_placement<R: Rng>(rng: &mut R) -> PlacementCase {
    let w = rng.random_range(0.12..0.16);
    let workspace = Workspace { table: TableBounds::centered(w, 0.05), ..Workspace::default() };
    let config = PlannerConfig::for_workspace(workspace);
    let a = rng.random_range(0.01..0.045);
    let mut wb = WorldBuilder::new(workspace.block_size);
    let moved = wb.on_table(0.0, 0.0, SHORT_HEIGHT);
    wb.on_table(-a, 0.0, TALL_HEIGHT);
    wb.on_table(a, 0.0, TALL_HEIGHT);
    let world = wb.build();
    let action = Action::relocate(moved);
    let anchor = world.position(moved);
    let model = build_placement_model(&world, &action, &[], &anchor, &config).unwrap();
    PlacementCase { world, action, config, model, anchor }
}

/// Best leaf over every branch assignment, each leaf solved by active-set
/// enumeration. `None` when every leaf is infeasible.
pub fn enumerate_leaves(model: &MiqpModel) -> Option<(f64, DVector<f64>)> {
    let k = model.disjunctions.len();
    let n = model.dim();
    let mut best: Option<(f64, DVector<f64>)> = None;
    for leaf in 0..4usize.pow(k as u32) {
        let mut rows: Vec<(DVector<f64>, f64)> = model.convex.iter().map(|r| (r.coeffs.clone(), r.rhs)).collect();
        let mut code = leaf;
        for d in &model.disjunctions {
            let r = &d.branches[code % 4];
            rows.push((r.coeffs.clone(), r.rhs));
            code /= 4;
        }
        let a = DMatrix::from_fn(rows.len(), n, |i, j| rows[i].0[j]);
        let b = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.1));
        let p = model.objective.clone().with_inequalities(a, b);
        let (f, v) = enumerate_active_sets(&p);
        if f.is_finite() && best.as_ref().is_none_or(|(bf, _)| f < *bf) {
            best = Some((f, v));
        }
    }
    best
}

pub const GRID: f64 = 0.005;

/// Nearest feasible point to the anchor on a grid over the table, checked
/// against the raw geometry (table, reach polygon, inflated footprints).
pub fn grid_nearest(case: &PlacementCase) -> Option<f64> {
    let t = &case.config.workspace.table;
    grid_nearest_in(case, (t.x_min, t.x_max), (t.y_min, t.y_max), GRID)
}

/// [`grid_nearest`] restricted to a box, with its own step.
pub fn grid_nearest_in(case: &PlacementCase, xs: (f64, f64), ys: (f64, f64), step: f64) -> Option<f64> {
    let ws = &case.config.workspace;
    let t = &ws.table;
    let mut best: Option<f64> = None;
    let nx = ((xs.1 - xs.0) / step).ceil() as usize;
    let ny = ((ys.1 - ys.0) / step).ceil() as usize;
    for i in 0..=nx {
        for j in 0..=ny {
            let p = Point::new(xs.0 + i as f64 * step, ys.0 + j as f64 * step);
            let free = t.holds(&p, ws.block_size)
                && ws.reach.contains(&p)
                && case
                    .world
                    .table_blocks()
                    .filter(|b| b.id != case.action.block)
                    .all(|b| !inside_inflated(&b.pose, &p, case.config.obstacle_margin));
            if free {
                let d = (p - case.anchor).norm();
                if best.is_none_or(|b| d < b) {
                    best = Some(d);
                }
            }
        }
    }
    best
}

/// Grid check of a solver optimum at distance `d` from the anchor, placed at
/// `at`. The coarse grid must not beat it and must come within one cell;
/// where it does not, the optimum sits in a wedge thinner than the grid and a
/// ten times finer grid around `at` has to come within one of its cells.
pub fn grid_agrees(case: &PlacementCase, at: &Point, d: f64) -> Result<bool, String> {
    let cell = GRID * 2f64.sqrt();
    let Some(g) = grid_nearest(case) else { return Ok(false) };
    if g < d - 1e-6 {
        return Err(format!("grid {g} beats solver {d}"));
    }
    if g <= d + cell {
        return Ok(true);
    }
    let fine = GRID / 10.0;
    let r = 4.0 * GRID;
    let local = grid_nearest_in(case, (at.x - r, at.x + r), (at.y - r, at.y + r), fine);
    match local {
        Some(l) if l >= d - 1e-6 && l <= d + fine * 2f64.sqrt() => Ok(true),
        other => Err(format!("grid {g}, local {other:?}, solver {d}")),
    }
}

/// Strictly inside the footprint of `pose` grown by `margin`.
pub fn inside_inflated(pose: &BlockPose, p: &Point, margin: f64) -> bool {
    let (dx, dy) = (p.x - pose.x, p.y - pose.y);
    let (c, s) = (pose.theta.cos(), pose.theta.sin());
    let (lx, ly) = (c * dx + s * dy, -s * dx + c * dy);
    lx.abs().max(ly.abs()) < pose.size_l / 2.0 + margin
}

/// Counts from [`check_placements`].
pub struct PlacementStats {
    pub infeasible: usize,
    pub gridded: usize,
}

/// Branch-and-bound on `n` random placement problems (every tenth one sealed)
/// against leaf enumeration and the grid. The first disagreement is an error.
pub fn check_placements(n: usize, seed: u64) -> Result<PlacementStats, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = PlacementStats { infeasible: 0, gridded: 0 };
    for case_no in 0..n {
        let case = if case_no % 10 == 9 { sealed_placement(&mut rng) } else { random_placement(&mut rng) };
        let r = branch_and_bound(&case.model).map_err(|e| format!("case {case_no}: {e}"))?;
        match enumerate_leaves(&case.model) {
            None => {
                if r.is_optimal() {
                    return Err(format!("case {case_no}: solver found a point in an empty model"));
                }
                if grid_nearest(&case).is_some() {
                    return Err(format!("case {case_no}: grid found a point in a certified-empty model"));
                }
                stats.infeasible += 1;
            }
            Some((f, _)) => {
                if !r.is_optimal() || !is_model_feasible(&case.model, &r.u) {
                    return Err(format!("case {case_no}: no feasible optimum reported"));
                }
                if (r.objective - f).abs() > 1e-7 {
                    return Err(format!("case {case_no}: objective {} vs leaves {f}", r.objective));
                }
                let d = (r.point(0) - case.anchor).norm();
                // A feasible sliver thinner than the grid can hide from it
                // entirely; those cases are only checked against the leaves.
                if grid_agrees(&case, &r.point(0), d).map_err(|e| format!("case {case_no}: {e}"))? {
                    stats.gridded += 1;
                }
            }
        }
    }
    Ok(stats)
}

/// `n` random box QPs against active-set enumeration, with KKT and
/// feasibility checks.
pub fn check_qps(n: usize, seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for case in 0..n {
        let p = random_box_qp(&mut rng);
        let s = solve_qp(&p).map_err(|e| format!("case {case}: {e}"))?;
        if !s.is_optimal() {
            return Err(format!("case {case}: {:?}", s.status));
        }
        let (best, _) = enumerate_active_sets(&p);
        if (s.objective - best).abs() > 1e-7 {
            return Err(format!("case {case}: {} vs {best}", s.objective));
        }
        let kkt = kkt_residual(&p, &s);
        if kkt > STAT_TOL {
            return Err(format!("case {case}: KKT residual {kkt:e}"));
        }
        if p.max_violation(&s.v) > 1e-9 {
            return Err(format!("case {case}: infeasible answer"));
        }
    }
    Ok(())
}
