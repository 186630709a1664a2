use gg_core::checks::layout_invariants;

#[test]
fn ten_thousand_random_vectors() {
    let rep = layout_invariants(10_000, 7).unwrap();
    assert_eq!(rep.violations, 0);
    assert!(rep.max_quat_deviation <= 1e-9, "{}", rep.max_quat_deviation);
}
