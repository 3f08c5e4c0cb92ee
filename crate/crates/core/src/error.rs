use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("inadmissible scaling parameters: {0}")]
    InadmissibleScaling(String),

    #[error("fitted tail index {fitted:.4} deviates from {expected:.4} by more than {tolerance}")]
    InconsistentTail {
        fitted: f64,
        expected: f64,
        tolerance: f64,
    },

    #[error("target has zero measure")]
    ZeroMeasureTarget,

    #[error("target {target} is not defined for {system}")]
    UnsupportedTarget { system: String, target: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("grid has {0} points, at least {min} are required", min = crate::transform::MIN_GRID_POINTS)]
    GridTooCoarse(usize),

    #[error("input is not a valid output of the transform: F(0) = {0:e}")]
    NonzeroAtOrigin(f64),

    #[error("fixed-point iteration stopped after {iterations} iterations with sup change {change:e}")]
    NoConvergence { iterations: usize, change: f64 },

    #[error("path enumeration over {paths} cylinders exceeds the limit")]
    EnumerationTooLarge { paths: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
