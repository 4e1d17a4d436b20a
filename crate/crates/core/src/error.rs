use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),

    #[error("invalid integrator configuration: {0}")]
    Integrator(String),

    #[error("envelope ordering violated at t = {t}: lower ({lo_s}, {lo_i}) upper ({hi_s}, {hi_i})")]
    EnvelopeOrder {
        t: f64,
        lo_s: f64,
        lo_i: f64,
        hi_s: f64,
        hi_i: f64,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("infeasible configuration: {0}")]
    Infeasible(String),

    #[error("stale model: {0}")]
    StaleModel(String),

    #[error("corrupt model file: {0}")]
    CorruptModel(String),

    #[error("unsupported model format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("state ({s:.6}, {i:.6}) is outside the {domain} policy domain")]
    Domain { s: f64, i: f64, domain: &'static str },

    #[error("synthesis inconsistency: {0}")]
    Synthesis(String),

    #[error("empty candidate set")]
    EmptyCandidates,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
