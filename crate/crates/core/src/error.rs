use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the formula or operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// A grid, region or condenser does not have the required shape.
    #[error("geometry error: {0}")]
    Geometry(String),
    /// An operation that needs at least one cell received none.
    #[error("empty cell set")]
    EmptySet,
    /// The energy gradient does not exist at the given field.
    #[error("singular gradient: {0}")]
    Singularity(String),
    /// Too much of the domain is degenerate for the distortion functional.
    #[error("degenerate mapping: {flagged} flagged cells ({fraction:.4} of the domain volume)")]
    Degenerate { flagged: usize, fraction: f64 },
    /// Exponents outside the window required by the requested check.
    #[error("exponent window error: {0}")]
    Window(String),
}

pub type Result<T> = std::result::Result<T, Error>;
