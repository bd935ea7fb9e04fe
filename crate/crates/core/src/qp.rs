//! Dense convex QP solver.
//!
//! Solves
//!
//! ```text
//!     minimize    ½ vᵀ Q v + qᵀ v + offset
//!     subject to  A_in v ≥ b_in
//!                 A_eq v = b_eq
//! ```
//!
//! with a primal active-set method. `Q` only has to be positive semidefinite:
//! zero-curvature descent directions are followed as rays until a constraint
//! blocks them (or reported as unbounded). A feasible start is found by a
//! phase-one LP solved with the same iteration, whose multipliers double as
//! a Farkas certificate when the constraints are inconsistent.

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};
use thiserror::Error;

/// Primal feasibility tolerance.
pub const FEAS_TOL: f64 = 1e-9;
/// KKT stationarity tolerance.
pub const STAT_TOL: f64 = 1e-8;
/// Tie tolerance for pivoting decisions.
pub const TIE_TOL: f64 = 1e-10;

const PSD_TOL: f64 = 1e-10;
const SYM_TOL: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct QpProblem {
    pub q_mat: DMatrix<f64>,
    pub q_vec: DVector<f64>,
    pub offset: f64,
    pub a_in: DMatrix<f64>,
    pub b_in: DVector<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
}

impl QpProblem {
    /// Unconstrained problem of dimension `n`.
    pub fn new(q_mat: DMatrix<f64>, q_vec: DVector<f64>) -> Self {
        let n = q_vec.len();
        QpProblem {
            q_mat,
            q_vec,
            offset: 0.0,
            a_in: DMatrix::zeros(0, n),
            b_in: DVector::zeros(0),
            a_eq: DMatrix::zeros(0, n),
            b_eq: DVector::zeros(0),
        }
    }

    pub fn dim(&self) -> usize {
        self.q_vec.len()
    }

    pub fn with_inequalities(mut self, a_in: DMatrix<f64>, b_in: DVector<f64>) -> Self {
        self.a_in = a_in;
        self.b_in = b_in;
        self
    }

    pub fn with_equalities(mut self, a_eq: DMatrix<f64>, b_eq: DVector<f64>) -> Self {
        self.a_eq = a_eq;
        self.b_eq = b_eq;
        self
    }

    pub fn with_offset(mut self, offset: f64) -> Self {
        self.offset = offset;
        self
    }

    pub fn objective(&self, v: &DVector<f64>) -> f64 {
        0.5 * (v.transpose() * &self.q_mat * v)[(0, 0)] + self.q_vec.dot(v) + self.offset
    }

    pub fn gradient(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.q_mat * v + &self.q_vec
    }

    /// Largest violation over all constraints (0 when feasible).
    pub fn max_violation(&self, v: &DVector<f64>) -> f64 {
        let mut worst = 0.0f64;
        if self.a_in.nrows() > 0 {
            let r = &self.a_in * v - &self.b_in;
            worst = r.iter().fold(worst, |w, &x| w.max(-x));
        }
        if self.a_eq.nrows() > 0 {
            let r = &self.a_eq * v - &self.b_eq;
            worst = r.iter().fold(worst, |w, &x| w.max(x.abs()));
        }
        worst
    }

    fn validate(&self) -> Result<(), QpError> {
        let n = self.dim();
        let checks = [
            ("Q rows", self.q_mat.nrows(), n),
            ("Q cols", self.q_mat.ncols(), n),
            ("A_in cols", self.a_in.ncols(), n),
            ("b_in len", self.b_in.len(), self.a_in.nrows()),
            ("A_eq cols", self.a_eq.ncols(), n),
            ("b_eq len", self.b_eq.len(), self.a_eq.nrows()),
        ];
        for (what, got, expected) in checks {
            if got != expected {
                return Err(QpError::DimensionMismatch { what, expected, got });
            }
        }
        if n == 0 {
            return Ok(());
        }
        let asym = (&self.q_mat - self.q_mat.transpose()).amax();
        if asym > SYM_TOL * (1.0 + self.q_mat.amax()) {
            return Err(QpError::NotSymmetric { asymmetry: asym });
        }
        let min_eig = SymmetricEigen::new(self.q_mat.clone())
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        if min_eig < -PSD_TOL {
            return Err(QpError::NotPsd { min_eigenvalue: min_eig });
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Certificate of inconsistency: `y ≥ 0`, `A_inᵀ y + A_eqᵀ μ = 0` and
/// `b_inᵀ y + b_eqᵀ μ > 0`.
#[derive(Clone, Debug)]
pub struct FarkasCertificate {
    pub y_in: DVector<f64>,
    pub mu_eq: DVector<f64>,
}

impl FarkasCertificate {
    /// `(‖A_inᵀy + A_eqᵀμ‖∞, b_inᵀy + b_eqᵀμ, min y)`.
    pub fn check(&self, p: &QpProblem) -> (f64, f64, f64) {
        let mut comb = p.a_in.transpose() * &self.y_in;
        if p.a_eq.nrows() > 0 {
            comb += p.a_eq.transpose() * &self.mu_eq;
        }
        let gap = p.b_in.dot(&self.y_in) + p.b_eq.dot(&self.mu_eq);
        let min_y = self.y_in.iter().cloned().fold(f64::INFINITY, f64::min);
        (comb.amax(), gap, if self.y_in.is_empty() { 0.0 } else { min_y })
    }
}

#[derive(Clone, Debug)]
pub struct QpSolution {
    pub v: DVector<f64>,
    pub objective: f64,
    /// Inequality rows held active at the optimum.
    pub active_set: Vec<usize>,
    pub status: QpStatus,
    /// Multipliers of the inequality rows (zero off the active set).
    pub lambda_in: DVector<f64>,
    pub lambda_eq: DVector<f64>,
    pub farkas: Option<FarkasCertificate>,
    pub iterations: usize,
}

impl QpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == QpStatus::Optimal
    }
}

#[derive(Debug, Error)]
pub enum QpError {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("cost matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },
    #[error("cost matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },
    #[error("iteration limit reached after {iterations} iterations")]
    IterationLimit {
        iterations: usize,
        best: DVector<f64>,
    },
}

/// KKT stationarity residual `‖Qv + q − A_inᵀλ − A_eqᵀμ‖∞` of a solution.
pub fn kkt_residual(p: &QpProblem, s: &QpSolution) -> f64 {
    let mut r = p.gradient(&s.v);
    if p.a_in.nrows() > 0 {
        r -= p.a_in.transpose() * &s.lambda_in;
    }
    if p.a_eq.nrows() > 0 {
        r -= p.a_eq.transpose() * &s.lambda_eq;
    }
    r.amax()
}

pub fn solve_qp(p: &QpProblem) -> Result<QpSolution, QpError> {
    p.validate()?;
    let n = p.dim();
    let m_in = p.a_in.nrows();

    // Rank-reduce the equality block by least squares.
    let eq = reduce_equalities(&p.a_eq, &p.b_eq);
    let x_ls = eq.least_squares_point(n);
    if let Some(resid) = eq.inconsistency(&p.a_eq, &p.b_eq, &x_ls) {
        // Farkas: μ = b − A x_ls satisfies A_eqᵀ μ = 0 and b·μ = ‖μ‖² > 0.
        return Ok(infeasible(
            n,
            m_in,
            p.a_eq.nrows(),
            FarkasCertificate {
                y_in: DVector::zeros(m_in),
                mu_eq: resid,
            },
        ));
    }

    let start_violation = if m_in > 0 {
        (&p.b_in - &p.a_in * &x_ls).max().max(0.0)
    } else {
        0.0
    };
    let start = if start_violation <= FEAS_TOL {
        x_ls
    } else {
        match phase_one(p, &eq, &x_ls, start_violation)? {
            PhaseOne::Feasible(x) => x,
            PhaseOne::Infeasible(cert) => {
                return Ok(infeasible(n, m_in, p.a_eq.nrows(), cert));
            }
        }
    };

    let sys = ActiveSystem {
        q_mat: &p.q_mat,
        q_vec: &p.q_vec,
        eq_rows: &eq.rows,
        a_in: &p.a_in,
        b_in: &p.b_in,
    };
    let out = sys.run(start)?;
    let objective = p.objective(&out.x);
    let lambda_eq = eq.lift_multipliers(&out.lambda_eq, p.a_eq.nrows());
    Ok(QpSolution {
        objective: if out.unbounded { f64::NEG_INFINITY } else { objective },
        v: out.x,
        active_set: out.working,
        status: if out.unbounded {
            QpStatus::Unbounded
        } else {
            QpStatus::Optimal
        },
        lambda_in: out.lambda_in,
        lambda_eq,
        farkas: None,
        iterations: out.iterations,
    })
}

fn infeasible(n: usize, m_in: usize, m_eq: usize, cert: FarkasCertificate) -> QpSolution {
    QpSolution {
        v: DVector::zeros(n),
        objective: f64::INFINITY,
        active_set: Vec::new(),
        status: QpStatus::Infeasible,
        lambda_in: DVector::zeros(m_in),
        lambda_eq: DVector::zeros(m_eq),
        farkas: Some(cert),
        iterations: 0,
    }
}

/// Equality block after least-squares rank reduction: `rows · v = rhs`,
/// with `rows = Vᵣᵀ` and `rhs = Σᵣ⁻¹ Uᵣᵀ b`.
struct ReducedEq {
    rows: DMatrix<f64>,
    rhs: DVector<f64>,
    /// Maps reduced multipliers back to the original rows: `μ = U Σ⁻¹ μᵣ`.
    back: DMatrix<f64>,
}

fn reduce_equalities(a_eq: &DMatrix<f64>, b_eq: &DVector<f64>) -> ReducedEq {
    let n = a_eq.ncols();
    let p = a_eq.nrows();
    if p == 0 {
        return ReducedEq {
            rows: DMatrix::zeros(0, n),
            rhs: DVector::zeros(0),
            back: DMatrix::zeros(0, 0),
        };
    }
    let svd = SVD::new(a_eq.clone(), true, true);
    let u = svd.u.as_ref().expect("u requested");
    let vt = svd.v_t.as_ref().expect("v_t requested");
    let smax = svd.singular_values.max();
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > 1e-12 * smax.max(1.0))
        .collect();
    let r = keep.len();
    let mut rows = DMatrix::zeros(r, n);
    let mut rhs = DVector::zeros(r);
    let mut back = DMatrix::zeros(p, r);
    for (k, &i) in keep.iter().enumerate() {
        let s = svd.singular_values[i];
        rows.row_mut(k).copy_from(&vt.row(i));
        rhs[k] = u.column(i).dot(b_eq) / s;
        back.column_mut(k).copy_from(&(u.column(i) / s));
    }
    ReducedEq { rows, rhs, back }
}

impl ReducedEq {
    fn least_squares_point(&self, n: usize) -> DVector<f64> {
        // rows has orthonormal rows, so rowsᵀ·rhs is the min-norm solution.
        if self.rows.nrows() == 0 {
            DVector::zeros(n)
        } else {
            self.rows.transpose() * &self.rhs
        }
    }

    fn inconsistency(
        &self,
        a_eq: &DMatrix<f64>,
        b_eq: &DVector<f64>,
        x: &DVector<f64>,
    ) -> Option<DVector<f64>> {
        if a_eq.nrows() == 0 {
            return None;
        }
        let resid = b_eq - a_eq * x;
        (resid.amax() > FEAS_TOL).then_some(resid)
    }

    fn lift_multipliers(&self, reduced: &DVector<f64>, p: usize) -> DVector<f64> {
        if p == 0 {
            DVector::zeros(0)
        } else {
            &self.back * reduced
        }
    }
}

enum PhaseOne {
    Feasible(DVector<f64>),
    Infeasible(FarkasCertificate),
}

/// min t  s.t.  A_in v + t ≥ b_in,  t ≥ 0,  A_eq v = b_eq.
fn phase_one(
    p: &QpProblem,
    eq: &ReducedEq,
    x0: &DVector<f64>,
    t0: f64,
) -> Result<PhaseOne, QpError> {
    let n = p.dim();
    let m = p.a_in.nrows();
    let mut a = DMatrix::zeros(m + 1, n + 1);
    a.view_mut((0, 0), (m, n)).copy_from(&p.a_in);
    for i in 0..m {
        a[(i, n)] = 1.0;
    }
    a[(m, n)] = 1.0;
    let mut b = DVector::zeros(m + 1);
    b.rows_mut(0, m).copy_from(&p.b_in);
    let mut eq_rows = DMatrix::zeros(eq.rows.nrows(), n + 1);
    eq_rows.view_mut((0, 0), (eq.rows.nrows(), n)).copy_from(&eq.rows);
    let q_mat = DMatrix::zeros(n + 1, n + 1);
    let mut q_vec = DVector::zeros(n + 1);
    q_vec[n] = 1.0;
    let mut start = DVector::zeros(n + 1);
    start.rows_mut(0, n).copy_from(x0);
    start[n] = t0;

    let sys = ActiveSystem {
        q_mat: &q_mat,
        q_vec: &q_vec,
        eq_rows: &eq_rows,
        a_in: &a,
        b_in: &b,
    };
    let out = sys.run(start)?;
    let t = out.x[n];
    if t <= FEAS_TOL {
        let x = out.x.rows(0, n).into_owned();
        return Ok(PhaseOne::Feasible(x));
    }
    let y_in = out.lambda_in.rows(0, m).into_owned();
    let mu_eq = eq.lift_multipliers(&out.lambda_eq, p.a_eq.nrows());
    Ok(PhaseOne::Infeasible(FarkasCertificate { y_in, mu_eq }))
}

struct ActiveSystem<'a> {
    q_mat: &'a DMatrix<f64>,
    q_vec: &'a DVector<f64>,
    eq_rows: &'a DMatrix<f64>,
    a_in: &'a DMatrix<f64>,
    b_in: &'a DVector<f64>,
}

struct ActiveOutcome {
    x: DVector<f64>,
    working: Vec<usize>,
    lambda_in: DVector<f64>,
    lambda_eq: DVector<f64>,
    unbounded: bool,
    iterations: usize,
}

enum Step {
    /// Newton step to the minimizer on the current face.
    Newton(DVector<f64>),
    /// Zero-curvature descent direction; take it until blocked.
    Ray(DVector<f64>),
    Stationary,
}

impl ActiveSystem<'_> {
    fn run(&self, mut x: DVector<f64>) -> Result<ActiveOutcome, QpError> {
        let n = x.len();
        let m = self.a_in.nrows();
        let n_eq = self.eq_rows.nrows();
        let max_iter = 100 * (n + m) + 100;
        let mut working: Vec<usize> = Vec::new();
        let scale = 1.0 + self.q_mat.amax() + self.q_vec.amax();

        for iter in 0..max_iter {
            let g = self.q_mat * &x + self.q_vec;
            let active = self.active_matrix(&working);
            let z = null_space(&active, n);
            match self.step(&z, &g, &x, scale) {
                Step::Stationary => {
                    let lambda = multipliers(&active, &g);
                    // Most negative multiplier leaves; ties go to the lowest row.
                    let mut drop: Option<(usize, f64)> = None;
                    for (k, &row) in working.iter().enumerate() {
                        let l = lambda[n_eq + k];
                        if l >= -TIE_TOL * scale {
                            continue;
                        }
                        drop = match drop {
                            Some((bk, bl))
                                if l > bl + TIE_TOL * scale
                                    || ((l - bl).abs() <= TIE_TOL * scale
                                        && row > working[bk]) =>
                            {
                                Some((bk, bl))
                            }
                            _ => Some((k, l)),
                        };
                    }
                    match drop.map(|(k, _)| k) {
                        Some(k) => {
                            working.remove(k);
                        }
                        None => {
                            let mut lambda_in = DVector::zeros(m);
                            for (k, &row) in working.iter().enumerate() {
                                lambda_in[row] = lambda[n_eq + k].max(0.0);
                            }
                            let lambda_eq = lambda.rows(0, n_eq).into_owned();
                            let mut ws = working.clone();
                            ws.sort_unstable();
                            return Ok(ActiveOutcome {
                                x,
                                working: ws,
                                lambda_in,
                                lambda_eq,
                                unbounded: false,
                                iterations: iter + 1,
                            });
                        }
                    }
                }
                Step::Newton(p) => {
                    let (alpha, block) = self.ratio_test(&x, &p, &working, Some(1.0));
                    x += alpha * &p;
                    if let Some(i) = block {
                        working.push(i);
                    }
                }
                Step::Ray(d) => {
                    let (alpha, block) = self.ratio_test(&x, &d, &working, None);
                    match block {
                        Some(i) => {
                            x += alpha * &d;
                            working.push(i);
                        }
                        None => {
                            return Ok(ActiveOutcome {
                                x,
                                working,
                                lambda_in: DVector::zeros(m),
                                lambda_eq: DVector::zeros(n_eq),
                                unbounded: true,
                                iterations: iter + 1,
                            });
                        }
                    }
                }
            }
        }
        Err(QpError::IterationLimit {
            iterations: max_iter,
            best: x,
        })
    }

    fn active_matrix(&self, working: &[usize]) -> DMatrix<f64> {
        let n = self.q_vec.len();
        let n_eq = self.eq_rows.nrows();
        let mut a = DMatrix::zeros(n_eq + working.len(), n);
        if n_eq > 0 {
            a.view_mut((0, 0), (n_eq, n)).copy_from(self.eq_rows);
        }
        for (k, &row) in working.iter().enumerate() {
            a.row_mut(n_eq + k).copy_from(&self.a_in.row(row));
        }
        a
    }

    fn step(&self, z: &DMatrix<f64>, g: &DVector<f64>, x: &DVector<f64>, scale: f64) -> Step {
        if z.ncols() == 0 {
            return Step::Stationary;
        }
        let zt = z.transpose();
        let h = &zt * self.q_mat * z;
        let r = &zt * g;
        let eig = SymmetricEigen::new(h);
        let ut_r = eig.eigenvectors.transpose() * &r;
        let curv_tol = 1e-11 * eig.eigenvalues.amax().max(1.0);
        let mut ray = DVector::zeros(z.ncols());
        let mut has_ray = false;
        let mut newton = DVector::zeros(z.ncols());
        for i in 0..eig.eigenvalues.len() {
            let lam = eig.eigenvalues[i];
            let c = ut_r[i];
            if lam > curv_tol {
                newton -= eig.eigenvectors.column(i) * (c / lam);
            } else if c.abs() > 1e-10 * scale {
                ray -= eig.eigenvectors.column(i) * c;
                has_ray = true;
            }
        }
        if has_ray {
            return Step::Ray(z * ray);
        }
        let p = z * newton;
        if p.amax() <= 1e-13 * (1.0 + x.amax()) {
            Step::Stationary
        } else {
            Step::Newton(p)
        }
    }

    /// Largest step along `d` that keeps every inactive row feasible.
    /// Ties go to the smallest row index.
    fn ratio_test(
        &self,
        x: &DVector<f64>,
        d: &DVector<f64>,
        working: &[usize],
        cap: Option<f64>,
    ) -> (f64, Option<usize>) {
        let mut alpha = cap.unwrap_or(f64::INFINITY);
        let mut block = None;
        let dnorm = d.amax();
        for i in 0..self.a_in.nrows() {
            if working.contains(&i) {
                continue;
            }
            let row = self.a_in.row(i);
            let ad = row.dot(&d.transpose());
            if ad >= -1e-14 * dnorm * (1.0 + row.amax()) {
                continue;
            }
            let slack = row.dot(&x.transpose()) - self.b_in[i];
            let ai = (slack / -ad).max(0.0);
            let better = match block {
                None => ai <= alpha,
                Some(_) => ai < alpha - TIE_TOL * alpha.max(1e-12),
            };
            if better {
                alpha = ai;
                block = Some(i);
            }
        }
        (alpha, block)
    }
}

/// Orthonormal basis of the null space of `a` (k × n), as columns.
fn null_space(a: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    if a.nrows() == 0 {
        return DMatrix::identity(n, n);
    }
    let rows = a.nrows().max(n);
    let mut padded = DMatrix::zeros(rows, n);
    padded.view_mut((0, 0), (a.nrows(), n)).copy_from(a);
    let svd = SVD::new(padded, false, true);
    let vt = svd.v_t.expect("v_t requested");
    let smax = svd.singular_values.max().max(1e-300);
    let null: Vec<usize> = (0..n)
        .filter(|&i| svd.singular_values[i] <= 1e-10 * smax)
        .collect();
    let mut z = DMatrix::zeros(n, null.len());
    for (k, &i) in null.iter().enumerate() {
        z.column_mut(k).copy_from(&vt.row(i).transpose());
    }
    z
}

/// Least-squares solution of `aᵀ λ = g`.
fn multipliers(a: &DMatrix<f64>, g: &DVector<f64>) -> DVector<f64> {
    if a.nrows() == 0 {
        return DVector::zeros(0);
    }
    let at = a.transpose();
    let svd = SVD::new(at, true, true);
    svd.solve(g, 1e-12).expect("svd solve")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn dist_sq_problem(target: &[f64]) -> QpProblem {
        let n = target.len();
        let t = DVector::from_column_slice(target);
        QpProblem::new(DMatrix::identity(n, n) * 2.0, -2.0 * &t).with_offset(t.norm_squared())
    }

    #[test]
    fn unconstrained_minimum() {
        let p = dist_sq_problem(&[1.0, 1.0]);
        let s = solve_qp(&p).unwrap();
        assert!(s.is_optimal());
        assert_abs_diff_eq!(s.v[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.v[1], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.objective, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn single_active_constraint_projects() {
        let p = dist_sq_problem(&[0.0, 0.0])
            .with_inequalities(DMatrix::from_row_slice(1, 2, &[1.0, 0.0]), DVector::from_element(1, 1.0));
        let s = solve_qp(&p).unwrap();
        assert!(s.is_optimal());
        assert_abs_diff_eq!(s.v[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.v[1], 0.0, epsilon = 1e-12);
        assert_eq!(s.active_set, vec![0]);
        assert!(kkt_residual(&p, &s) <= STAT_TOL);
    }

    #[test]
    fn infeasible_box_has_certificate() {
        // x ≥ 1 and -x ≥ 0 (x ≤ 0)
        let p = dist_sq_problem(&[0.0]).with_inequalities(
            DMatrix::from_row_slice(2, 1, &[1.0, -1.0]),
            DVector::from_column_slice(&[1.0, 0.0]),
        );
        let s = solve_qp(&p).unwrap();
        assert_eq!(s.status, QpStatus::Infeasible);
        let (comb, gap, min_y) = s.farkas.unwrap().check(&p);
        assert!(comb < 1e-9 && gap > 1e-9 && min_y >= -1e-12, "{comb} {gap} {min_y}");
    }

    #[test]
    fn inconsistent_equalities_are_infeasible() {
        let p = dist_sq_problem(&[0.0, 0.0]).with_equalities(
            DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 2.0, 2.0]),
            DVector::from_column_slice(&[1.0, 3.0]),
        );
        let s = solve_qp(&p).unwrap();
        assert_eq!(s.status, QpStatus::Infeasible);
        let (comb, gap, _) = s.farkas.unwrap().check(&p);
        assert!(comb < 1e-9 && gap > 0.0);
    }

    #[test]
    fn rank_deficient_equalities_are_reduced() {
        // duplicated row x + y = 1
        let p = dist_sq_problem(&[0.0, 0.0]).with_equalities(
            DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 2.0, 2.0]),
            DVector::from_column_slice(&[1.0, 2.0]),
        );
        let s = solve_qp(&p).unwrap();
        assert!(s.is_optimal());
        assert_abs_diff_eq!(s.v[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(s.v[1], 0.5, epsilon = 1e-12);
        assert!(kkt_residual(&p, &s) <= STAT_TOL);
    }

    #[test]
    fn linear_objective_unbounded_and_bounded() {
        let p = QpProblem::new(DMatrix::zeros(1, 1), DVector::from_element(1, 1.0));
        assert_eq!(solve_qp(&p).unwrap().status, QpStatus::Unbounded);
        let p = p.with_inequalities(DMatrix::from_element(1, 1, 1.0), DVector::from_element(1, -2.0));
        let s = solve_qp(&p).unwrap();
        assert!(s.is_optimal());
        assert_abs_diff_eq!(s.v[0], -2.0, epsilon = 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = QpProblem::new(DMatrix::identity(2, 2), DVector::zeros(3));
        assert!(matches!(solve_qp(&p), Err(QpError::DimensionMismatch { .. })));
        let p = QpProblem::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]), DVector::zeros(2));
        assert!(matches!(solve_qp(&p), Err(QpError::NotPsd { .. })));
    }

    #[test]
    fn degenerate_vertex_terminates() {
        // three constraints through the same vertex (1, 1)
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let b = DVector::from_column_slice(&[1.0, 1.0, 2.0]);
        let p = dist_sq_problem(&[0.0, 0.0]).with_inequalities(a, b);
        let s = solve_qp(&p).unwrap();
        assert!(s.is_optimal());
        assert_abs_diff_eq!(s.v[0], 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(s.v[1], 1.0, epsilon = 1e-10);
        assert!(kkt_residual(&p, &s) <= STAT_TOL);
    }
}
