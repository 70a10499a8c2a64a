use thiserror::Error;

/// A single problem found while validating a run configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigIssue {
    pub path: String,
    pub message: String,
}

impl std::fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate control fields: Omega_+ and Omega_- are both zero")]
    DegenerateControl,

    #[error("unsupported regime: {0}")]
    UnsupportedRegime(String),

    #[error("branch tracking ambiguous at k = {k}: best overlap {overlap:.3} < 0.5")]
    TrackingAmbiguity { k: f64, overlap: f64 },

    #[error("eigen-decomposition failed to converge for a {0}x{0} matrix")]
    EigenFailure(usize),

    #[error(
        "pulse spectrum is not adiabatic: {fraction:.3e} of its weight lies at |k|c > {cutoff:.3e}"
    )]
    NonadiabaticSpectrum { fraction: f64, cutoff: f64 },

    #[error("step size {dt} exceeds the allowed maximum {max} ({reason})")]
    StepSize { dt: f64, max: f64, reason: &'static str },

    #[error("inconsistent recoil inputs: {0}")]
    InconsistentRecoil(String),

    #[error("invalid control schedule: {0}")]
    Schedule(String),

    #[error("configuration has {} error(s):\n{}", .0.len(), render_issues(.0))]
    Config(Vec<ConfigIssue>),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn render_issues(issues: &[ConfigIssue]) -> String {
    issues
        .iter()
        .map(|i| format!("  {i}"))
        .collect::<Vec<_>>()
        .join("\n")
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
