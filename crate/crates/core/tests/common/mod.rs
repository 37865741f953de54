//! Oracle suites shared by the test targets and the acceptance binary. Each
//! check returns a description of the first violation it finds.
#![allow(dead_code)]

pub mod allocation;
pub mod geometry;
pub mod gradients;
pub mod heatmap;

pub type Check = Result<(), String>;

pub fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Check {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Runs a proptest strategy for `cases` cases outside the test harness.
pub fn property<S: proptest::strategy::Strategy>(
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), proptest::test_runner::TestCaseError>,
) -> Check {
    let config = proptest::test_runner::Config {
        cases,
        failure_persistence: None,
        ..Default::default()
    };
    proptest::test_runner::TestRunner::new_with_rng(
        config,
        proptest::test_runner::TestRng::deterministic_rng(proptest::test_runner::RngAlgorithm::ChaCha),
    )
    .run(&strategy, test)
    .map_err(|e| e.to_string())
}
