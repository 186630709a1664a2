//! Grasp oracle against an exhaustive pairwise-cone check, plus the lift
//! and quality worked examples.

use gg_core::grasp::{evaluate_contacts, force_closure, grasp_quality, lift_holds, Contact, GraspOutcome, PreparedTarget};
use gg_core::checks::closure_agreement;
use gg_core::voxel::{generate_target, ShapeFamily};
use nalgebra::Vector3;

#[test]
fn force_closure_matches_exhaustive_oracle() {
    let a = closure_agreement(1000, 2024);
    assert_eq!(a.agreed, a.sets);
    assert!(a.closed >= 100 && a.sets - a.closed >= 100, "unbalanced fixture: {a:?}");
}

#[test]
fn closure_worked_examples() {
    let x = Vector3::x();
    let opposing = [contact(-x * 0.02, x, 0.5), contact(x * 0.02, -x, 0.5)];
    assert!(force_closure(&opposing));
    let tilted = |n: Vector3<f64>| n.normalize();
    let off = [
        contact(-x * 0.02, tilted(Vector3::new(1.0, 1.0, 0.0)), 0.3),
        contact(x * 0.02, tilted(Vector3::new(-1.0, 1.0, 0.0)), 0.3),
    ];
    assert!(!force_closure(&off));
    assert!(!force_closure(&opposing[..1]));
    assert!(!force_closure(&[]));
}

#[test]
fn lift_inequality_examples() {
    // Capacity 2·0.5·10 = 10 N against 1.2·0.1·9.81 = 1.1772 N.
    assert!(lift_holds(0.5, 10.0, 0.1));
    // Capacity 0.1 N against 11.772 N.
    assert!(!lift_holds(0.05, 1.0, 1.0));
    assert!(!lift_holds(0.5, 0.5, 0.1));
}

#[test]
fn empty_contacts_neither_lift_nor_stabilise() {
    let t = generate_target(ShapeFamily::Box, &[4.0, 8.0, 8.0], 1).unwrap();
    let prepared = PreparedTarget::new(&t).unwrap();
    let out = evaluate_contacts(&prepared, &[], 10.0);
    assert!(!out.lifted);
    assert_eq!(out.stability, 0.0);
    assert_eq!(out.contact_count, 0);
}

#[test]
fn quality_examples() {
    let outcome = |lifted, stability, applied_force| GraspOutcome {
        lifted,
        stability,
        applied_force,
        contact_count: 2,
    };
    assert!(grasp_quality(&outcome(false, 0.0, 0.0), 20.0) <= 0.1);
    assert!((grasp_quality(&outcome(true, 1.0, 0.0), 20.0) - 1.0).abs() < 1e-12);
    assert!((grasp_quality(&outcome(true, 0.5, 20.0), 20.0) - 0.75).abs() < 1e-15);
}

fn contact(p: Vector3<f64>, n: Vector3<f64>, mu: f64) -> Contact {
    Contact {
        position: p.into(),
        normal: n.into(),
        mu,
    }
}
