use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate covariate: no distinct interior quantile among {distinct} distinct values")]
    DegenerateCovariate { distinct: usize },

    #[error("knot {knot} lies outside the boundary interval ({lo}, {hi})")]
    KnotOutsideBoundary { knot: f64, lo: f64, hi: f64 },

    #[error("covariate value {value} lies outside the boundary interval [{lo}, {hi}]")]
    OutsideBoundary { value: f64, lo: f64, hi: f64 },

    #[error("non-finite input: {0}")]
    NonFinite(&'static str),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid dataset: {0}")]
    InvalidData(String),

    #[error("numerical overflow in {0}")]
    NumericalOverflow(&'static str),

    #[error("singular least-squares system ({dim} columns)")]
    Singular { dim: usize },

    #[error("empty effective subspace")]
    EmptySubspace,

    #[error("enrichment region degenerate: {accepted} of {tried} screened candidates accepted")]
    DegenerateEnrichment { accepted: usize, tried: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
