use thiserror::Error;

/// Error taxonomy shared by every module in the crate.
///
/// Parameter validity encodes the model's standing assumptions, so domain
/// violations are reported, never silently clamped.
#[derive(Debug, Error)]
pub enum HermiteError {
    /// A mathematical precondition was violated (parameter out of range,
    /// divergent integral, non-distinct times, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid run configuration (grid extents, cell counts, config keys).
    #[error("config error: {0}")]
    Config(String),

    /// Mismatched array lengths or incompatible grids.
    #[error("shape error: {0}")]
    Shape(String),

    /// An operation whose cost would explode (kernel order above the cap,
    /// dense storage for an order-3 kernel on a large grid, ...).
    #[error("resource error: {0}")]
    Resource(String),

    /// A numerical procedure failed to reach its accuracy target; the
    /// message carries diagnostics identifying the offending computation.
    #[error("numeric error: {0}")]
    Numeric(String),
}

pub type Result<T> = std::result::Result<T, HermiteError>;
