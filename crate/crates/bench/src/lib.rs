//! Shared fixtures for the criterion benchmarks.

use statgeo_core::scenarios::{self, Scenario};

pub fn scenario(name: &str) -> Scenario {
    scenarios::builtin(name).expect("benchmark scenarios exist")
}
