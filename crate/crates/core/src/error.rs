use thiserror::Error;

/// Errors raised anywhere in the sensing pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A configuration value violates a documented invariant.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// An arccos argument fell outside [-1, 1] by more than the clamp tolerance.
    #[error("arccos argument {value} out of domain while computing {context}")]
    AngleDomain { context: &'static str, value: f64 },

    /// The composite angle-of-departure interval has non-positive width.
    #[error("degenerate composite AoD interval: width {width}")]
    DegenerateInterval { width: f64 },

    /// A closed form divides by the bandwidth and the bandwidth is zero.
    #[error("{0} requires a non-zero bandwidth")]
    ZeroBandwidth(&'static str),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    /// A designed grid point receives no echo energy, so no finite power meets the SNR target.
    #[error("infeasible sensing grid: zero echo strength at stage {stage}, subcarrier {subcarrier}")]
    InfeasibleGrid { stage: usize, subcarrier: usize },

    /// The communication SINR target stayed infeasible down to the backoff floor.
    #[error("communication power infeasible; last attempted threshold {last_tau_c}")]
    InfeasibleComm { last_tau_c: f64 },

    /// A served user has zero desired-link gain.
    #[error("user {user} unservable on subcarrier {subcarrier}: zero desired gain")]
    UnservableUser { user: usize, subcarrier: usize },

    /// A dictionary column with zero norm was encountered during matching pursuit.
    #[error("degenerate dictionary: column {column} has zero norm")]
    DegenerateDictionary { column: usize },

    #[error("symbol with zero magnitude cannot be matched")]
    ZeroSymbol,

    #[error("stage needs at least one OFDM symbol")]
    NoSymbols,

    #[error("AAS measurement matrix requires an elevation estimate")]
    MissingElevation,

    #[error("user placement failed: {0}")]
    Placement(String),

    #[error("{0}")]
    Other(String),
}

pub type Result<T> = std::result::Result<T, Error>;
