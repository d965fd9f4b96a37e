use std::fmt;

/// Stage of the validation workflow an error originated in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Calibration,
    Propagation,
    ScenarioDesign,
    SensorDesign,
    Acquisition,
    Metric,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Calibration => "calibration",
            Stage::Propagation => "propagation",
            Stage::ScenarioDesign => "scenario design",
            Stage::SensorDesign => "sensor design",
            Stage::Acquisition => "data acquisition",
            Stage::Metric => "validation metric",
        };
        f.write_str(s)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid bounds: {0}")]
    InvalidBounds(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty sample list")]
    EmptySamples,

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("gradient evaluation failed at sample {index}: {source}")]
    Gradient {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("evaluation failed at sample {index}: {source}")]
    Evaluation {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("coordinate labels differ between influence matrices")]
    LabelMismatch,

    #[error("influence matrix of `{0}` has zero trace (identically zero gradient)")]
    ZeroTrace(String),

    #[error("every start of the multistart search failed")]
    AllStartsFailed,

    #[error("Fisher information is singular everywhere sampled; parameters are not identifiable")]
    NonIdentifiable,

    #[error("prior density is zero at the initial point")]
    ZeroPriorDensity,

    #[error("distribution has no density: {0}")]
    NoDensity(&'static str),

    #[error("linear system is singular (pivot {pivot:e} at row {row})")]
    SingularSystem { row: usize, pivot: f64 },

    #[error("linear solve did not reach tolerance (relative residual {0:e})")]
    NotConverged(f64),

    #[error("adjoint field was computed for a different operator")]
    StaleAdjoint,

    #[error("region contains no fluid cells")]
    SolidRegion,

    #[error("velocity field: {0}")]
    Velocity(String),

    #[error("step-size check failed: halving the step changed the result by {0:e} (relative); use a smaller step")]
    StepSize(f64),

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn at_stage(self, stage: Stage) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
