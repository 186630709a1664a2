//! Oracles shared by the test suites and the acceptance run: finite
//! differences, exhaustive force closure, layout invariants, toy PoWER
//! convergence and overfit runs.

pub mod fd;
pub mod gradients;
pub mod memorize;
pub mod oracles;

pub use fd::FdReport;
pub use gradients::gradient_suite;
pub use memorize::{memorize_ae1, memorize_ae2, memorize_ae3, Memorization};
pub use oracles::{closure_agreement, closure_brute_force, layout_invariants, power_identities, toy_convergence, ClosureAgreement, LayoutReport};
