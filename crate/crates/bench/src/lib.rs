//! Benchmark fixtures.

use spotcheck_core::signal::fixtures;
use spotcheck_core::{Environment, MechanismSpec};

/// Environments the benches sweep over, with short labels.
pub fn environments() -> Vec<(&'static str, Environment)> {
    vec![
        ("e1", fixtures::e1()),
        ("ternary_a", fixtures::ternary_a()),
        ("ternary_b", fixtures::ternary_b()),
    ]
}

/// The reference mechanisms that run on every fixture environment.
pub fn mechanisms_for(env: &Environment) -> Vec<MechanismSpec> {
    MechanismSpec::reference_set()
        .into_iter()
        .filter(|m| m.check_env(env).is_ok())
        .collect()
}
