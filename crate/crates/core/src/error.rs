use thiserror::Error;

/// Machine-readable failure category, surfaced by the CLI as exit code and JSON tag.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Geometry,
    Horizon,
    Solver,
    Stall,
    Io,
}

impl ErrorCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCategory::Config => "config",
            ErrorCategory::Geometry => "geometry",
            ErrorCategory::Horizon => "horizon",
            ErrorCategory::Solver => "solver",
            ErrorCategory::Stall => "stall",
            ErrorCategory::Io => "io",
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            ErrorCategory::Config => 2,
            ErrorCategory::Horizon => 3,
            ErrorCategory::Stall => 4,
            ErrorCategory::Solver => 5,
            ErrorCategory::Geometry => 6,
            ErrorCategory::Io => 7,
        }
    }
}

#[derive(Debug, Error)]
pub enum MfgError {
    #[error("point ({x}, {y}) is outside the regularity band of width {band} (signed distance {sd})")]
    BandViolation { x: f64, y: f64, sd: f64, band: f64 },
    #[error("direction points out of the closed inward cone at a boundary point (u.n = {dot})")]
    ConeViolation { dot: f64 },
    #[error("query point lies in the target set")]
    InTarget,
    #[error("no admissible descent direction at ({x}, {y})")]
    NoDescent { x: f64, y: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("grid/timeline mismatch: {0}")]
    Mismatch(String),
    #[error("stationary sweeps did not converge after {sweeps} sweeps (residual {residual})")]
    NoConvergence { sweeps: usize, residual: f64 },
    #[error("horizon too small: {0}")]
    Horizon(String),
    #[error("target not reached before t = {horizon} from ({x}, {y})")]
    Unreached { horizon: f64, x: f64, y: f64 },
    #[error("time {t} is beyond the horizon {horizon}")]
    BeyondHorizon { t: f64, horizon: f64 },
    #[error("measure is not normalized (total weight {total})")]
    Unnormalized { total: f64 },
    #[error("probe function is not 1-Lipschitz (slope {slope})")]
    NonLipschitz { slope: f64 },
    #[error("test function support touches the target set or t = 0: {0}")]
    BadTestFunction(String),
    #[error("configuration invalid:\n{}", .0.iter().map(|i| format!("  - {i}")).collect::<Vec<_>>().join("\n"))]
    Config(Vec<ConfigIssue>),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("format error: {0}")]
    Format(String),
}

impl MfgError {
    pub fn category(&self) -> ErrorCategory {
        use MfgError::*;
        match self {
            BandViolation { .. } | ConeViolation { .. } | InTarget => ErrorCategory::Geometry,
            Horizon(_) | Unreached { .. } | BeyondHorizon { .. } => ErrorCategory::Horizon,
            Config(_) | InvalidArgument(_) | BadTestFunction(_) | Mismatch(_) => ErrorCategory::Config,
            Io { .. } | Format(_) => ErrorCategory::Io,
            NoDescent { .. } | NoConvergence { .. } | Unnormalized { .. } | NonLipschitz { .. } => {
                ErrorCategory::Solver
            }
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        MfgError::Io { path: path.as_ref().display().to_string(), source }
    }
}

/// One violated constraint of a scenario file.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigIssue {
    pub path: String,
    pub message: String,
}

impl std::fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

pub type Result<T, E = MfgError> = std::result::Result<T, E>;
