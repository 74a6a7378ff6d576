use alloc::vec::Vec;
use core::fmt;

/// Everything that can go wrong inside the numerical core.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An argument outside the mathematical domain of the operation.
    Domain { what: &'static str, value: f64 },
    DimensionMismatch { expected: usize, found: usize },
    UnsupportedDimension(usize),
    NotSymmetric,
    NotPositiveDefinite { min_eigenvalue: f64 },
    Singular,
    /// Kernel evaluated on the diagonal x = z.
    Singularity,
    Precondition(&'static str),
    /// Field failed its ellipticity check at a sampled point.
    NotElliptic { eigenvalue: f64, lower: f64, upper: f64 },
    AssemblyTolerance { achieved: f64, requested: f64 },
    LineSearch { iteration: usize, grad_norm: f64, iterate: Vec<f64> },
    NonConvergence { what: &'static str, iterations: usize, residual: f64 },
    Domination { position: f64, f: f64, bound: f64 },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Domain { what, value } => write!(f, "{what} out of domain: {value}"),
            Error::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
            Error::UnsupportedDimension(n) => write!(f, "unsupported dimension {n}"),
            Error::NotSymmetric => write!(f, "matrix is not symmetric"),
            Error::NotPositiveDefinite { min_eigenvalue } => {
                write!(f, "matrix not positive definite (min eigenvalue {min_eigenvalue})")
            }
            Error::Singular => write!(f, "singular matrix"),
            Error::Singularity => write!(f, "kernel evaluated at x = z"),
            Error::Precondition(msg) => write!(f, "precondition violated: {msg}"),
            Error::NotElliptic { eigenvalue, lower, upper } => write!(
                f,
                "eigenvalue {eigenvalue} outside ellipticity bounds [{lower}, {upper}]"
            ),
            Error::AssemblyTolerance { achieved, requested } => write!(
                f,
                "assembly tolerance unreachable: achieved {achieved:e}, requested {requested:e}"
            ),
            Error::LineSearch { iteration, grad_norm, iterate } => write!(
                f,
                "line search failed at iteration {iteration} (|grad| = {grad_norm:e}, {} dofs)",
                iterate.len()
            ),
            Error::NonConvergence { what, iterations, residual } => write!(
                f,
                "{what} did not converge after {iterations} iterations (residual {residual:e})"
            ),
            Error::Domination { position, f: fv, bound } => write!(
                f,
                "domination |f| <= Q a violated at x = {position}: |f| = {fv}, Q a = {bound}"
            ),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
