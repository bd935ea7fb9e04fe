//! Local placement solver for comparison with branch-and-bound.
//!
//! Same constraints as the placement MIQP, but each footprint disjunction is
//! replaced by a smooth penalty on the footprint overlap and the problem is
//! solved by BFGS with an increasing penalty weight. Whatever comes out is checked
//! against the exact constraints before it is reported.

use nalgebra::{DVector, Matrix2, Vector2};
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Point;
use crate::miqp::{build_placement_model, is_model_feasible, KeepOut, MiqpError, MiqpModel};
use crate::symbolic::Action;
use crate::world::{PlannerConfig, WorldState};

/// Iterates stop moving below this step length (meters).
const MIN_STEP: f64 = 1e-14;
const MAX_STEP: f64 = 1.0;
/// Length of the first trial step of every BFGS run.
const FIRST_STEP: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalNlpConfig {
    pub restarts: usize,
    pub tol: f64,
    pub initial_weight: f64,
    pub max_doublings: usize,
    pub max_iters: usize,
    /// Standard deviation of the restart perturbation around `init`.
    pub restart_sigma: f64,
    pub seed: u64,
}

impl Default for LocalNlpConfig {
    fn default() -> Self {
        LocalNlpConfig { restarts: 20, tol: 1e-8, initial_weight: 10.0, max_doublings: 100, max_iters: 200, restart_sigma: 0.05, seed: 0 }
    }
}

#[derive(Debug, Error)]
pub enum LocalNlpError {
    #[error("no verified feasible point after {restarts} restarts")]
    Failure { restarts: usize },
    #[error(transparent)]
    Model(#[from] MiqpError),
}

/// Penalized objective and its gradient at `u`.
fn penalized(model: &MiqpModel, weight: f64, u: &Vector2<f64>) -> (f64, Vector2<f64>) {
    let v = DVector::from_column_slice(u.as_slice());
    let obj = &model.objective;
    let mut f = obj.objective(&v);
    let g_full = &obj.q_mat * &v + &obj.q_vec;
    let mut g = Vector2::new(g_full[0], g_full[1]);
    let mut hinge = |coeffs: &DVector<f64>, slack: f64| {
        if slack < 0.0 {
            f += weight * slack * slack;
            g += 2.0 * weight * slack * Vector2::new(coeffs[0], coeffs[1]);
        }
    };
    for r in &model.convex {
        hinge(&r.coeffs, r.slack(&v));
    }
    // Footprint overlap: product of the overlaps along the two frame axes
    // (branches 0, 1 and 2, 3), squared.
    for d in &model.disjunctions {
        let axis = |i: usize, j: usize| {
            let (si, sj) = (d.branches[i].slack(&v), d.branches[j].slack(&v));
            let (k, s) = if si >= sj { (i, si) } else { (j, sj) };
            (s < 0.0).then(|| (-s, -Vector2::new(d.branches[k].coeffs[0], d.branches[k].coeffs[1])))
        };
        if let (Some((ox, gx)), Some((oy, gy))) = (axis(0, 1), axis(2, 3)) {
            let area = ox * oy;
            f += weight * area * area;
            g += 2.0 * weight * area * (oy * gx + ox * gy);
        }
    }
    (f, g)
}

/// BFGS with Armijo backtracking on the penalized objective.
fn bfgs(model: &MiqpModel, weight: f64, start: Vector2<f64>, nlp: &LocalNlpConfig) -> Vector2<f64> {
    let mut x = start;
    let (mut f, mut g) = penalized(model, weight, &x);
    let initial = |g: &Vector2<f64>| Matrix2::identity() * (FIRST_STEP / g.norm().max(1e-300));
    let mut h = initial(&g);
    for _ in 0..nlp.max_iters {
        if g.norm() < nlp.tol {
            break;
        }
        let mut dir = -(h * g);
        if dir.dot(&g) >= 0.0 {
            h = initial(&g);
            dir = -(h * g);
        }
        // No trial step longer than the table.
        let mut step = (MAX_STEP / dir.norm()).min(1.0);
        let (x_new, f_new, g_new) = loop {
            let cand = x + step * dir;
            let (fc, gc) = penalized(model, weight, &cand);
            if fc <= f + 1e-4 * step * g.dot(&dir) {
                break (cand, fc, gc);
            }
            step *= 0.5;
            if step * dir.norm() < MIN_STEP {
                return x;
            }
        };
        let s = x_new - x;
        let y = g_new - g;
        let sy = s.dot(&y);
        if sy > 1e-16 {
            let rho = 1.0 / sy;
            let i = Matrix2::identity();
            h = (i - rho * s * y.transpose()) * h * (i - rho * y * s.transpose()) + rho * s * s.transpose();
        }
        let moved = s.norm();
        x = x_new;
        f = f_new;
        g = g_new;
        if moved < MIN_STEP {
            break;
        }
    }
    x
}

/// One penalty-continuation run from `init`.
fn descend(model: &MiqpModel, init: Vector2<f64>, nlp: &LocalNlpConfig) -> Vector2<f64> {
    let mut x = init;
    let mut w = nlp.initial_weight;
    for _ in 0..=nlp.max_doublings {
        x = bfgs(model, w, x, nlp);
        if is_model_feasible(model, &DVector::from_column_slice(x.as_slice())) {
            break;
        }
        w *= 2.0;
    }
    x
}

/// Local solution of the placement problem of `action`. The first run starts
/// at `init`; later restarts start at Gaussian perturbations of it. The best
/// verified point is returned.
pub fn local_nlp_place(
    world: &WorldState,
    action: &Action,
    keepouts: &[KeepOut],
    init: &Point,
    config: &PlannerConfig,
    nlp: &LocalNlpConfig,
) -> Result<Point, LocalNlpError> {
    let from = world.position(action.block);
    let model = build_placement_model(world, action, keepouts, &from, config)?;
    let table = config.workspace.table;
    let h = config.workspace.block_size / 2.0;
    let mut rng = ChaCha8Rng::seed_from_u64(nlp.seed);
    let mut best: Option<(f64, Vector2<f64>)> = None;
    for r in 0..nlp.restarts.max(1) {
        let start = if r == 0 {
            Vector2::new(init.x, init.y)
        } else {
            let jitter = Normal::new(0.0, nlp.restart_sigma).expect("finite sigma");
            Vector2::new(
                (init.x + jitter.sample(&mut rng)).clamp(table.x_min + h, table.x_max - h),
                (init.y + jitter.sample(&mut rng)).clamp(table.y_min + h, table.y_max - h),
            )
        };
        let x = descend(&model, start, nlp);
        let v = DVector::from_column_slice(x.as_slice());
        if is_model_feasible(&model, &v) {
            let f = model.objective.objective(&v);
            if best.is_none_or(|(bf, _)| f < bf) {
                best = Some((f, x));
            }
        }
    }
    best.map(|(_, x)| Point::new(x[0], x[1])).ok_or(LocalNlpError::Failure { restarts: nlp.restarts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::miqp::branch_and_bound;
    use crate::symbolic::Action;
    use crate::world::{WorldBuilder, SHORT_HEIGHT, TALL_HEIGHT};

    #[test]
    fn empty_table_matches_miqp() {
        let cfg = PlannerConfig::default();
        let mut wb = WorldBuilder::new(0.05);
        let a = wb.on_table(0.3, 0.1, SHORT_HEIGHT);
        let w = wb.build();
        let act = Action::relocate(a);
        let p = local_nlp_place(&w, &act, &[], &Point::new(-0.3, -0.2), &cfg, &LocalNlpConfig::default()).unwrap();
        let m = build_placement_model(&w, &act, &[], &w.position(a), &cfg).unwrap();
        let exact = branch_and_bound(&m).unwrap().point(0);
        assert!((p - exact).norm() < 1e-4);
    }

    #[test]
    fn reported_points_are_feasible() {
        let cfg = PlannerConfig::default();
        let mut wb = WorldBuilder::new(0.05);
        let a = wb.on_table(0.0, 0.0, SHORT_HEIGHT);
        for (x, y) in [(0.06, 0.0), (-0.06, 0.0), (0.0, 0.06), (0.0, -0.06)] {
            wb.on_table(x, y, TALL_HEIGHT);
        }
        let w = wb.build();
        let act = Action::relocate(a);
        let m = build_placement_model(&w, &act, &[], &w.position(a), &cfg).unwrap();
        for seed in 0..5 {
            let nlp = LocalNlpConfig { seed, restarts: 3, ..LocalNlpConfig::default() };
            if let Ok(p) = local_nlp_place(&w, &act, &[], &Point::new(0.01, 0.0), &cfg, &nlp) {
                assert!(is_model_feasible(&m, &DVector::from_vec(vec![p.x, p.y])));
            }
        }
    }
}
