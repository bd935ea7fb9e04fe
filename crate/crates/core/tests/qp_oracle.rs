mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tamp_core::qp::{solve_qp, QpProblem};

#[test]
fn random_box_qps_match_enumeration() {
    common::check_qps(300, 11).unwrap();
}

fn drop_row(p: &QpProblem, row: usize) -> QpProblem {
    let keep: Vec<usize> = (0..p.a_in.nrows()).filter(|&r| r != row).collect();
    let a = p.a_in.select_rows(keep.iter());
    let b = p.b_in.select_rows(keep.iter());
    p.clone().with_inequalities(a, b)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn removing_a_constraint_never_increases_objective(seed in 0u64..10_000, which in 0usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = common::random_box_qp(&mut rng);
        let row = which % p.a_in.nrows();
        let full = solve_qp(&p).unwrap();
        let relaxed = solve_qp(&drop_row(&p, row)).unwrap();
        if relaxed.is_optimal() {
            prop_assert!(relaxed.objective <= full.objective + 1e-9);
        }
    }

    #[test]
    fn row_permutation_invariance(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = common::random_box_qp(&mut rng);
        let m = p.a_in.nrows();
        let perm: Vec<usize> = (0..m).rev().collect();
        let q = p.clone().with_inequalities(p.a_in.select_rows(perm.iter()), p.b_in.select_rows(perm.iter()));
        let a = solve_qp(&p).unwrap();
        let b = solve_qp(&q).unwrap();
        prop_assert!((a.objective - b.objective).abs() <= 1e-9);
    }

    #[test]
    fn strictly_convex_resolve_is_bit_identical(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = common::random_box_qp(&mut rng);
        let n = p.dim();
        p.q_mat += nalgebra::DMatrix::identity(n, n);
        let a = solve_qp(&p).unwrap();
        let b = solve_qp(&p).unwrap();
        prop_assert_eq!(a.v, b.v);
    }
}
