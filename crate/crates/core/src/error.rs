use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid predicate space: {0}")]
    InvalidSpace(String),

    #[error("states belong to different predicate spaces")]
    SpaceMismatch,

    #[error("unknown variable `{0}`")]
    UnknownVariable(String),

    #[error("value `{value}` is not in the domain of `{variable}`")]
    UnknownValue { variable: String, value: String },

    #[error("incomplete assignment: missing variable `{0}`")]
    MissingVariable(String),

    #[error("invalid desire clause: {0}")]
    InvalidClause(String),

    #[error("unknown action `{0}`")]
    UnknownAction(String),

    #[error("action sets differ")]
    ActionMismatch,

    #[error("malformed state id `{0}`")]
    MalformedStateId(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("episode {episode}: expected step t={expected}, found t={found}")]
    NonConsecutiveStep {
        episode: u64,
        expected: u32,
        found: u32,
    },

    #[error("episode {0} has no terminal record")]
    MissingTerminal(u64),

    #[error("episode {episode}, step {t}: {message}")]
    Ingest {
        episode: u64,
        t: u32,
        message: String,
    },

    #[error("no episodes to build from")]
    EmptyInput,

    #[error("the policy graph is empty")]
    EmptyGraph,

    #[error("state `{0}` was never observed")]
    UnseenState(String),

    #[error("unsupported policy graph file version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("policy graph checksum mismatch")]
    Checksum,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("intention propagation exceeded {max_updates} updates; {active} states still active (e.g. {sample:?})")]
    PropagationBudget {
        max_updates: u64,
        active: usize,
        sample: Vec<String>,
    },

    #[error("intention of `{desire}` at `{state}` is zero")]
    ZeroIntention { desire: String, state: String },

    #[error("no improving path for `{desire}` from `{state}` ({reason})")]
    NoImprovingPath {
        desire: String,
        state: String,
        reason: String,
    },

    #[error("action `{action}` was never observed at `{state}`")]
    NoEvidence { state: String, action: String },

    #[error("template key `{0}` is missing")]
    MissingTemplate(String),

    #[error("environment failure: {0}")]
    Environment(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable snake_case name of the variant, for structured error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidSpace(_) => "invalid_space",
            Error::SpaceMismatch => "space_mismatch",
            Error::UnknownVariable(_) => "unknown_variable",
            Error::UnknownValue { .. } => "unknown_value",
            Error::MissingVariable(_) => "missing_variable",
            Error::InvalidClause(_) => "invalid_clause",
            Error::UnknownAction(_) => "unknown_action",
            Error::ActionMismatch => "action_mismatch",
            Error::MalformedStateId(_) => "malformed_state_id",
            Error::Parse { .. } => "parse",
            Error::NonConsecutiveStep { .. } => "non_consecutive_step",
            Error::MissingTerminal(_) => "missing_terminal",
            Error::Ingest { .. } => "ingest",
            Error::EmptyInput => "empty_input",
            Error::EmptyGraph => "empty_graph",
            Error::UnseenState(_) => "unseen_state",
            Error::Version { .. } => "version",
            Error::Checksum => "checksum",
            Error::Config(_) => "config",
            Error::PropagationBudget { .. } => "propagation_budget",
            Error::ZeroIntention { .. } => "zero_intention",
            Error::NoImprovingPath { .. } => "no_improving_path",
            Error::NoEvidence { .. } => "no_evidence",
            Error::MissingTemplate(_) => "missing_template",
            Error::Environment(_) => "environment",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
