//! Error types, one enum per module, unified under [`Error`].

use thiserror::Error;

/// Failures while parsing or evaluating an expression. Positions are
/// 1-based character columns in the source text.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("parse error at position {position}: {message}")]
    Parse { position: usize, message: String },
    #[error("evaluation error at position {position}: {message}")]
    Eval { position: usize, message: String },
}

impl ExprError {
    pub fn position(&self) -> usize {
        match self {
            ExprError::Parse { position, .. } | ExprError::Eval { position, .. } => *position,
        }
    }
}

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("invalid geometry: {0}")]
    Invalid(String),
    #[error("s = {s} lies outside [0, {l}]")]
    OutOfDomain { s: f64, l: f64 },
    #[error("beta is not positive: delta * sup|xi| * sup|x| = {bound} >= 1")]
    BetaNotPositive { bound: f64 },
    #[error(transparent)]
    Expr(#[from] ExprError),
}

#[derive(Debug, Error)]
pub enum FemError {
    #[error("invalid mesh: {0}")]
    Mesh(String),
    #[error("coefficient is not coercive: a = {value} at ({x}, {y})")]
    Coercivity { value: f64, x: f64, y: f64 },
    #[error("unsupported derivative order {0}")]
    UnsupportedOrder(usize),
    #[error("field length {got} does not match {expected}")]
    Dimension { got: usize, expected: usize },
    #[error("under-resolved: {0}")]
    Resolution(String),
    #[error("mesh file: {0}")]
    Io(String),
    #[error(transparent)]
    Expr(#[from] ExprError),
}

#[derive(Debug, Error)]
pub enum EigenError {
    #[error("factorization failed: {0}")]
    Factorization(String),
    #[error("eigensolver did not converge: {0}")]
    NotConverged(String),
    #[error("invalid eigenproblem: {0}")]
    Invalid(String),
}

#[derive(Debug, Error)]
pub enum HomogenizationError {
    #[error("compatibility defect {defect:e} exceeds {tol:e} in stage {stage}")]
    Compatibility { stage: String, defect: f64, tol: f64 },
    #[error("effective tensor Q is not symmetric: defect {defect:e} exceeds {tol:e}")]
    Asymmetric { defect: f64, tol: f64 },
    #[error("invalid cell problem: {0}")]
    Invalid(String),
}

#[derive(Debug, Error)]
pub enum CrossSectionError {
    #[error("compatibility defect {defect:e} exceeds {tol:e} in {stage}")]
    Compatibility { stage: String, defect: f64, tol: f64 },
    #[error("inconsistent inputs: {0}")]
    Consistency(String),
    #[error("invalid scale: {0}")]
    Scale(String),
}

#[derive(Debug, Error)]
pub enum EffectiveError {
    #[error("missing dependency: {0}")]
    Dependency(String),
    #[error("drift b.xi varies by {spread:e} along the guide; the localization model applies instead")]
    LocalizationRequired { spread: f64 },
    #[error("invalid scale: {0}")]
    Scale(String),
}

#[derive(Debug, Error)]
pub enum LocalizationError {
    #[error("degenerate minimum at s = {s}: curvature of h is {value:e}")]
    DegenerateMinimum { s: f64, value: f64 },
    #[error("no discrete spectrum: {0}")]
    NoDiscreteSpectrum(String),
    #[error("unsupported minimum configuration: {0}")]
    Unsupported(String),
}

#[derive(Debug, Error)]
pub enum VerificationError {
    #[error("invalid study: {0}")]
    Invalid(String),
    #[error("resource guard: {0}")]
    Resource(String),
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{0}")]
    Parse(String),
    #[error("invalid value for `{key}`: {message}")]
    Value { key: String, message: String },
    #[error("cannot read {path}: {message}")]
    Read { path: String, message: String },
}

/// Crate-wide error. The variant names the module the failure came from.
#[derive(Debug, Error)]
pub enum Error {
    #[error("[geometry] {0}")]
    Geometry(#[from] GeometryError),
    #[error("[fem_core] {0}")]
    Fem(#[from] FemError),
    #[error("[eigensolve] {0}")]
    Eigen(#[from] EigenError),
    #[error("[homogenization] {0}")]
    Homogenization(#[from] HomogenizationError),
    #[error("[cross_section] {0}")]
    CrossSection(#[from] CrossSectionError),
    #[error("[effective_model] {0}")]
    Effective(#[from] EffectiveError),
    #[error("[localization] {0}")]
    Localization(#[from] LocalizationError),
    #[error("[verification] {0}")]
    Verification(#[from] VerificationError),
    #[error("[config] {0}")]
    Config(#[from] ConfigError),
    #[error("[expr] {0}")]
    Expr(#[from] ExprError),
    #[error("[io] {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn module(&self) -> &'static str {
        match self {
            Error::Geometry(_) => "geometry",
            Error::Fem(_) => "fem_core",
            Error::Eigen(_) => "eigensolve",
            Error::Homogenization(_) => "homogenization",
            Error::CrossSection(_) => "cross_section",
            Error::Effective(_) => "effective_model",
            Error::Localization(_) => "localization",
            Error::Verification(_) => "verification",
            Error::Config(_) => "config",
            Error::Expr(_) => "expr",
            Error::Io(_) => "io",
        }
    }

    /// Process exit code used by the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Expr(_) => 2,
            Error::Geometry(GeometryError::Expr(_)) | Error::Fem(FemError::Expr(_)) => 2,
            Error::Verification(VerificationError::Resource(_)) => 4,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
