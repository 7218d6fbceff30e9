use thiserror::Error;

/// Errors raised by state construction, attack construction and the
/// statistics pipelines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid frame: {0}")]
    InvalidFrame(String),

    #[error("bin {bin} out of range for a frame of {num_bins} bins")]
    BinOutOfRange { bin: usize, num_bins: usize },

    #[error("frame mismatch: {left} bins vs {right} bins")]
    FrameMismatch { left: usize, right: usize },

    #[error("envelope support [{t_min}, {t_max}) exceeds frame extent [0, {extent})")]
    SupportExceedsFrame { t_min: f64, t_max: f64, extent: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("window length {window} does not divide frame size {num_bins}")]
    WindowDoesNotDivide { window: usize, num_bins: usize },

    #[error("peak offsets collide or leave the frame: {0}")]
    PeakLayout(String),

    #[error("continuous attack windows overlap (width {width} >= spacing {spacing})")]
    OverlappingWindows { width: f64, spacing: f64 },

    #[error("outcome {outcome} has zero probability")]
    ZeroProbabilityOutcome { outcome: usize },

    #[error("no same-bin coincidences: degenerate state/setting combination")]
    NoCoincidences,

    #[error("probability {0} outside the admissible range")]
    ProbabilityOutOfRange(f64),

    #[error("zero-variance comparison: {0}")]
    ZeroVariance(String),

    #[error("unknown closed-form formula `{0}`")]
    UnknownFormula(String),

    #[error("network synthesis failed: {0}")]
    SynthesisFailed(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
