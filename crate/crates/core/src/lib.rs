//! Finite-horizon optimal control: one-shot optimization, dynamic programming with
//! local search, and landscape analysis of both.

pub mod diff;
pub mod dp;
pub mod error;
pub mod expr;
pub mod feasible;
pub mod landscape;
pub mod model;
pub mod objective;
pub mod registry;
pub mod smooth;
pub mod solvers;
pub mod stochastic;

pub use error::{Error, Result};
pub use feasible::{FeasibleSet, ProductSet};
pub use model::{ControlProblem, InitialCondition, PolicyBasis, PolicyClass, PolicyParams, TabularPolicy, Trajectory};
pub use objective::{Objective, OneShotObjective};
pub use stochastic::{ExpectationEngine, NoiseLaw, NoiseModel};
