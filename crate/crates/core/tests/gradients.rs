use gg_core::checks::gradient_suite;

#[test]
fn every_case_passes_over_twenty_seeds() {
    let suite = gradient_suite(20).unwrap();
    assert_eq!(suite.len(), 13);
    for (name, report) in &suite {
        assert!(
            report.passes(),
            "{name}: {}/{} failed, first {:?}",
            report.failures.len(),
            report.checked,
            &report.failures[..report.failures.len().min(5)]
        );
    }
}
