#![allow(dead_code)]

use proptest::test_runner::{Config, RngSeed};

/// Property-test config: fixed seed, no failure persistence files.
pub fn config(cases: u32, seed: u64) -> Config {
    Config { cases, rng_seed: RngSeed::Fixed(seed), failure_persistence: None, ..Config::default() }
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}
