//! Optimal design of the validation scenario and of the sensor.

mod pattern;
mod scenario;
mod sensor;
mod verify;

pub use pattern::{multistart, pattern_search, Objective, OptimizerOptions, PatternResult};
pub use scenario::{
    optimize_scenario, optimize_scenario_from, DesignResult, ScenarioObjective, StartResult,
};
pub use sensor::{
    optimize_sensor, scan_with, sensor_scan, CandidateResult, SensorDesign, SensorObjective,
    SensorScan, SensorSearch,
};
pub use verify::{verify_recovery, VerificationRow, VerificationTable};
