use thiserror::Error;

pub type Result<T> = std::result::Result<T, LocError>;

#[derive(Debug, Error)]
pub enum LocError {
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("parameter set has no NLOS paths to keep")]
    EmptyParamSet,
    #[error("maximum path delay {delay_s:.3e} s exceeds the cyclic prefix {cp_s:.3e} s")]
    DelayExceedsCp { delay_s: f64, cp_s: f64 },
    #[error("signal energy is zero; SNR target is undefined")]
    ZeroSignal,
    #[error("singular input: {0}")]
    SingularInput(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("FIM is singular or badly conditioned (condition number {cond:.3e})")]
    SingularFim { cond: f64 },
    #[error("stopping rule fired before the first path selection")]
    NoPathDetected,
    #[error("beamspace kernel magnitude below 1e-12 for path {0}")]
    ZeroKernel(usize),
    #[error("non-finite value produced while updating path {0}")]
    NonFinite(usize),
    #[error("need at least {needed} paths, got {got}")]
    InsufficientPaths { needed: usize, got: usize },
    #[error("linear system for the trial rotation is singular")]
    SingularLinearSystem,
    #[error("Levenberg-Marquardt failed to decrease the cost")]
    LmDiverged,
    #[error("path response has zero norm")]
    ZeroResponse,
}
