use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("point {x} lies outside the domain [{lo}, {hi}]")]
    Domain { x: f64, lo: f64, hi: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("unknown coefficient set `{0}`")]
    UnknownCoefficients(String),
    #[error("mass {mass:e} within 10 cells of the boundary exceeds 1e-6 at t = {time}")]
    DomainEscape { time: f64, mass: f64 },
    #[error("stability requires more than {cap} sub-steps on [{from}, {to}]")]
    Stiffness { from: f64, to: f64, cap: usize },
    #[error("frozen flow covers [{have_from}, {have_to}] but [{need_from}, {need_to}] is required")]
    Range {
        have_from: f64,
        have_to: f64,
        need_from: f64,
        need_to: f64,
    },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("all particles coincide; silverman bandwidth is zero (supply a fixed bandwidth)")]
    DegenerateBandwidth,
    #[error("particle {index} escaped the density domain at t = {time} (x = {x})")]
    ParticleEscape { index: usize, time: f64, x: f64 },
    #[error("particle {index} became non-finite at t = {time}")]
    NonFinite { index: usize, time: f64 },
    #[error("numerical failure: {0}")]
    Numeric(String),
    #[error("test setup failed: {0}")]
    Setup(String),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
