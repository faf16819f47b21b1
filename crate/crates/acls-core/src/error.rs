use thiserror::Error;

/// Errors produced by the estimation, inference, and decomposition routines.
#[derive(Debug, Error)]
pub enum AclsError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("singular system: effective rank {effective_rank} < {required}")]
    SingularSystem {
        effective_rank: usize,
        required: usize,
    },

    #[error("degenerate design: {0}")]
    DegenerateDesign(String),

    #[error("instance too large for exact solver: n = {n} exceeds max_n = {max_n}")]
    InstanceTooLarge { n: usize, max_n: usize },

    #[error("insufficient inliers for inference: n_effective = {n_effective} <= p = {p}")]
    InsufficientInliers { n_effective: usize, p: usize },

    #[error("degenerate scale: sigma_hat is zero")]
    DegenerateScale,

    #[error("degenerate mask at sweep {sweep}: no unflagged frame left")]
    DegenerateMask { sweep: usize },

    #[error("iterate diverged to a non-finite point")]
    Divergence { last_finite: Vec<f64> },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, AclsError>;

impl AclsError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        AclsError::InvalidArgument(msg.into())
    }
}
