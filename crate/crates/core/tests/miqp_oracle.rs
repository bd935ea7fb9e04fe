mod common;

#[test]
fn branch_and_bound_matches_leaf_enumeration_and_grid() {
    let stats = common::check_placements(80, 7).unwrap();
    assert!(stats.infeasible >= 8 && stats.gridded > 60);
}
