use thiserror::Error;

/// Every failure the simulator can report.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("quadrature did not converge: estimate {estimate:e}, error {error:e} after {subdivisions} subdivisions")]
    QuadratureFailure {
        estimate: f64,
        error: f64,
        subdivisions: usize,
    },

    #[error("wavefunction node: |psi| = {modulus:e} against scale {scale:e}")]
    NodeSingularity { modulus: f64, scale: f64 },

    #[error("phase jump of {jump:.3} rad across the stencil exceeds pi/2")]
    PhaseUnwrapFailure { jump: f64 },

    #[error("integrator exceeded {max_steps} steps at t = {t}")]
    StepLimitExceeded { max_steps: usize, t: f64 },

    #[error("trajectory ran into a node at t = {t}; closest approach |psi|/scale = {nearest:e}")]
    NodeEncounter { t: f64, nearest: f64 },

    #[error("rejection sampler gave up after {rejects} rejections (acceptance rate {acceptance_rate:.3e})")]
    RejectionOverflow { rejects: u64, acceptance_rate: f64 },

    #[error("no fringes: found {found} maxima above the prominence floor")]
    NoFringesDetected { found: usize },

    #[error("config line {line}: `{key}`: {reason}")]
    ConfigParse {
        line: usize,
        key: String,
        reason: String,
    },

    #[error("i/o error on {path}: {reason}")]
    Io { path: String, reason: String },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for errors that come from the input rather than from the physics.
    pub fn is_config_error(&self) -> bool {
        matches!(self, Error::ConfigParse { .. } | Error::InvalidParameter { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
