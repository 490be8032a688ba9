//! Shared fixtures for the benches.

use ocscape_core::registry::{self, RegisteredProblem};
use ocscape_core::{ExpectationEngine, OneShotObjective};

pub fn problem(name: &str) -> RegisteredProblem {
    registry::lookup(name).expect("registered problem")
}

/// One-shot objective over inputs, or over policy parameters when the problem has a class.
pub fn objective<'a>(reg: &'a RegisteredProblem, engine: Option<&ExpectationEngine>) -> OneShotObjective<'a> {
    match &reg.class {
        Some(c) => OneShotObjective::params(&reg.problem, c.clone(), engine).expect("objective"),
        None => OneShotObjective::inputs(&reg.problem, engine).expect("objective"),
    }
}
