//! Stationary-point census, classification and the LQR correspondence experiment.

pub mod census;
pub mod classify;
pub mod lqr;
pub mod probe;

pub use census::{enumerate_stationary, polish_point, start_points, Census, CensusOptions, StationaryPointRecord};
pub use classify::{classify_point, neighborhood_probe, Classification, ClassifyOptions, PointClass, ProbeSummary};
pub use lqr::{correspondence_check, generate_lqr, lqr_experiment, CorrespondenceReport, Direction, LqrInstance, LqrScenario};
pub use probe::{null_space_probe, theorem_probe, Check, NullSpaceProbe, ProbeOptions, ProbeSubject, TheoremProbe};
