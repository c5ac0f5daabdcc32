//! Shared error type for every analysis stage.
//!
//! Variant names are part of the CLI contract: they are printed verbatim in
//! error reports so callers can tell a parse problem from a numerical one.

use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("SyntaxError at position {position}: {message}")]
    Syntax { position: usize, message: String },

    #[error("UnknownVariable at position {position}: `{name}` (expected t, eps or x1..x{dimension})")]
    UnknownVariable {
        position: usize,
        name: String,
        dimension: usize,
    },

    #[error("UnknownFunction at position {position}: `{name}`")]
    UnknownFunction { position: usize, name: String },

    #[error("NonFiniteValue in subexpression `{subexpression}`")]
    NonFiniteValue { subexpression: String },

    #[error("InvalidSystem: {message}")]
    InvalidSystem { message: String },

    #[error("StepSizeUnderflow at t = {t}: required step below 1e-14 of the span")]
    StepSizeUnderflow { t: f64 },

    #[error("NonFiniteState at t = {t}")]
    NonFiniteState { t: f64 },

    #[error("GrazingContact at t = {t}: |g| = {value:e} dips below the transversality tolerance without a sign change")]
    GrazingContact { t: f64, value: f64 },

    #[error("NoConvergence after {iterations} iterations (last residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("DegenerateCycle: {message}")]
    DegenerateCycle { message: String },

    #[error("SectionMiss: {message}")]
    SectionMiss { message: String },

    #[error("DegenerateEquilibrium near {location:?}: |det| = {det:e}")]
    DegenerateEquilibrium { location: Vec<f64>, det: f64 },

    #[error("BoundaryZeroOfPsi: |psi| = {value:e} at boundary sample {location:?}")]
    BoundaryZeroOfPsi { location: Vec<f64>, value: f64 },

    #[error("DimensionTooLarge: n = {n} exceeds the multistart/winding limit of {limit}")]
    DimensionTooLarge { n: usize, limit: usize },

    #[error("ZeroOnBoundary: field vanishes at boundary sample {location:?}")]
    ZeroOnBoundary { location: Vec<f64> },

    #[error("UnderResolved: boundary winding increments still exceed pi/2 after {samples} samples")]
    UnderResolved { samples: usize },

    #[error("SingularVariationalMatrix at tau = {tau}: condition estimate {condition:e}")]
    SingularVariationalMatrix { tau: f64, condition: f64 },

    #[error("BoundaryZero: |f({theta})| = {value:e} is below the nondegeneracy threshold {threshold:e}")]
    BoundaryZero {
        theta: f64,
        value: f64,
        threshold: f64,
    },

    #[error("HypothesisViolation at contact phase {contact_phase}: f vanishes at interval endpoint theta = {endpoint}")]
    HypothesisViolation { contact_phase: f64, endpoint: f64 },

    #[error("SingularJacobian: condition estimate {condition:e} exceeds 1e12")]
    SingularJacobian { condition: f64 },

    #[error("PartialSweep: eps = {failed_eps:e} failed after {completed} completed values ({source})")]
    PartialSweep {
        failed_eps: f64,
        completed: usize,
        source: Box<Error>,
    },
}

impl Error {
    /// Short machine-readable name of the variant, used in CLI reports.
    pub fn name(&self) -> &'static str {
        match self {
            Error::Syntax { .. } => "SyntaxError",
            Error::UnknownVariable { .. } => "UnknownVariable",
            Error::UnknownFunction { .. } => "UnknownFunction",
            Error::NonFiniteValue { .. } => "NonFiniteValue",
            Error::InvalidSystem { .. } => "InvalidSystem",
            Error::StepSizeUnderflow { .. } => "StepSizeUnderflow",
            Error::NonFiniteState { .. } => "NonFiniteState",
            Error::GrazingContact { .. } => "GrazingContact",
            Error::NoConvergence { .. } => "NoConvergence",
            Error::DegenerateCycle { .. } => "DegenerateCycle",
            Error::SectionMiss { .. } => "SectionMiss",
            Error::DegenerateEquilibrium { .. } => "DegenerateEquilibrium",
            Error::BoundaryZeroOfPsi { .. } => "BoundaryZeroOfPsi",
            Error::DimensionTooLarge { .. } => "DimensionTooLarge",
            Error::ZeroOnBoundary { .. } => "ZeroOnBoundary",
            Error::UnderResolved { .. } => "UnderResolved",
            Error::SingularVariationalMatrix { .. } => "SingularVariationalMatrix",
            Error::BoundaryZero { .. } => "BoundaryZero",
            Error::HypothesisViolation { .. } => "HypothesisViolation",
            Error::SingularJacobian { .. } => "SingularJacobian",
            Error::PartialSweep { .. } => "PartialSweep",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
