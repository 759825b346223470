use std::fmt;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("supercritical topography: max|G'| = {max_slope:.6} >= c(lambda) = {c:.6}")]
    Supercritical { max_slope: f64, c: f64 },
    #[error("root solve did not converge: {0}")]
    Convergence(String),
    #[error("iteration limit exceeded: {0}")]
    IterationLimit(String),
    #[error("ill-conditioned finite section: cond(T) = {cond:.3e} exceeds cap {cap:.1e}")]
    IllConditioned { cond: f64, cap: f64 },
    #[error("support error: {0}")]
    Support(String),
    #[error("continuity error: jump {jump:.3e} across tile boundary at theta = {theta:.6}")]
    Continuity { jump: f64, theta: f64 },
    #[error("window error: {0}")]
    Window(String),
    #[error("stencil error: {0}")]
    Stencil(String),
    #[error("singular system: {0}")]
    SingularSystem(String),
    #[error("stability error: {0}")]
    Stability(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("malformed file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Non-fatal numerical diagnostics. These never abort a computation; they are
/// collected in reports and logged.
#[derive(Debug, Clone, PartialEq)]
pub enum Warning {
    /// Energy discarded by Fourier truncation exceeded the alias threshold.
    Alias { discarded_fraction: f64 },
    /// Doubling the quadrature changed a result by more than its tolerance.
    Quadrature { what: &'static str, change: f64 },
    /// Grid refinement changed a solution by more than its tolerance.
    Refinement { change: f64 },
    /// Subcritical margin is small; finite sections degrade.
    Conditioning { margin: f64 },
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Warning::Alias { discarded_fraction } => {
                write!(f, "alias warning: discarded energy fraction {discarded_fraction:.3e}")
            }
            Warning::Quadrature { what, change } => {
                write!(f, "quadrature warning ({what}): refinement change {change:.3e}")
            }
            Warning::Refinement { change } => {
                write!(f, "refinement warning: grid doubling changed solution by {change:.3e}")
            }
            Warning::Conditioning { margin } => {
                write!(f, "conditioning warning: subcritical margin {margin:.4} is small")
            }
        }
    }
}
