use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("unknown builtin problem `{0}` (expected toy_abs, constrained_lqr or quadrotor)")]
    UnknownBuiltin(String),

    #[error("bad override `{key}` for builtin `{problem}`: {reason}")]
    BadOverride {
        problem: String,
        key: String,
        reason: String,
    },

    #[error("non-finite {what} at t = {t}, x = {x:?}, u = {u:?}")]
    NonFinite {
        what: &'static str,
        t: f64,
        x: Vec<f64>,
        u: Vec<f64>,
    },

    #[error("{what} diverged at node {node} (t = {t})")]
    BlowUp { what: &'static str, node: usize, t: f64 },

    #[error("invalid input schedule: {0}")]
    Schedule(String),
}
