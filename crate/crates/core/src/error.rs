use thiserror::Error;

/// Errors surfaced by the simulator's domain modules.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("allocation capacity exhausted: {0}")]
    Capacity(String),

    #[error("link target unreachable: {0}")]
    Unreachable(String),
}
