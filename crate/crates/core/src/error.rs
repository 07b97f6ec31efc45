use crate::mdp::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid MDP ({} violation(s)): {}", .0.len(), .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidMdp(Vec<Violation>),

    #[error("iteration {iteration} produced a non-finite value")]
    Divergence { iteration: usize },

    #[error("{0}")]
    NonFinite(String),

    #[error("did not converge within {max_iter} iterations (last residual {residual:e})")]
    NotConverged { max_iter: usize, residual: f64 },

    #[error("singular linear system")]
    Singular,

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("unknown environment `{0}`")]
    UnknownEnv(String),

    #[error("invalid action {action} (environment has {n_actions} actions)")]
    InvalidAction { action: usize, n_actions: usize },

    #[error("episode {episode}, step {step}: {source}")]
    Episode {
        episode: usize,
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed CSV: {0}")]
    Csv(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(expected: impl ToString, found: impl ToString) -> Self {
        Error::ShapeMismatch {
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
