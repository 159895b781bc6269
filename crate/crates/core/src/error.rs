use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid chart: {0}")]
    InvalidChart(String),
    #[error("operands live on different charts")]
    ChartMismatch,
    #[error("expected a form of degree {expected}, got degree {got}")]
    Degree { expected: usize, got: usize },
    #[error("cannot contract a 0-form")]
    ContractScalar,
    #[error("pushforward needs the inverse map")]
    MissingInverse,
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("model `{model}` failed its `{check}` build certificate: {detail}")]
    BuildCertificate { model: String, check: String, detail: String },
    #[error("seam mismatch: {0}")]
    Seam(String),
    #[error("degenerate system: {0}")]
    Degenerate(String),
    #[error("integration failed: {0}")]
    Integration(String),
    #[error("model has no {0}")]
    MissingForm(&'static str),
}

pub type Result<T> = std::result::Result<T, Error>;
