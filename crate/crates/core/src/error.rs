use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("transform diverges at s = {s}: defined only for s > {abscissa}")]
    DivergentTransform { s: f64, abscissa: f64 },

    #[error("lattice too coarse: residual tail mass {tail_mass:.3e} exceeds {bound:.1e}")]
    GridTooCoarse { tail_mass: f64, bound: f64 },

    #[error("requested abscissa {requested} lies beyond the lattice end {lattice_end}")]
    OutsideLattice { requested: f64, lattice_end: f64 },

    #[error("claim distribution has infinite mean")]
    InfiniteMean,

    #[error("claim distribution has infinite variance")]
    InfiniteVariance,

    #[error("degenerate group model: every group is empty (p0 = 1)")]
    DegenerateModel,

    #[error(
        "net profit condition violated: premium rate c = {premium_rate} must exceed \
         the expected claim outflow rate lambda * E[Y1] = {claim_rate}"
    )]
    NetProfitViolated { premium_rate: f64, claim_rate: f64 },

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("no ruined replication observed")]
    NoRuinObserved,

    #[error("cannot parse model config: {0}")]
    ConfigParse(String),

    #[error("model config does not match the schema: {0}")]
    Schema(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParams(msg.into())
}
