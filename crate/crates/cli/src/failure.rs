use nullrec::Error;
use serde_json::json;

#[derive(Debug, thiserror::Error)]
pub enum Failure {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Module(#[from] Error),
}

impl Failure {
    pub fn io(what: impl std::fmt::Display, e: std::io::Error) -> Self {
        Failure::Io(format!("{what}: {e}"))
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Failure::Config(_) => "ConfigParse",
            Failure::Io(_) => "IoFailure",
            Failure::Module(e) => module_kind(e).0,
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Io(_) => 3,
            Failure::Module(e) => module_kind(e).1,
        }
    }

    pub fn json_line(&self) -> String {
        json!({ "error": self.kind(), "message": self.to_string(), "exit_code": self.exit_code() }).to_string()
    }
}

fn module_kind(e: &Error) -> (&'static str, u8) {
    match e {
        Error::MinorizationViolated { .. } => ("MinorizationViolated", 4),
        Error::NotStochastic { .. } => ("NotStochastic", 5),
        Error::InvalidMeasure => ("InvalidMeasure", 6),
        Error::InvalidSmallFunction { .. } => ("InvalidSmallFunction", 7),
        Error::NotIrreducible { .. } => ("NotIrreducible", 8),
        Error::DimensionMismatch { .. } => ("DimensionMismatch", 9),
        Error::SeriesDiverges => ("SeriesDiverges", 10),
        Error::OrderTooLarge { .. } => ("OrderTooLarge", 11),
        Error::TruncationInsufficient { .. } => ("TruncationInsufficient", 12),
        Error::CoefficientMassDeficit { .. } => ("CoefficientMassDeficit", 13),
        Error::NegativeVariance(_) => ("NegativeVariance", 14),
        Error::InvalidHalfwidth(_) => ("InvalidHalfwidth", 15),
        Error::UnknownProcessFamily(_) => ("UnknownProcessFamily", 16),
        Error::InvalidSpec(_) => ("InvalidSpec", 17),
        Error::WrongFamily { .. } => ("WrongFamily", 18),
        Error::EmptyNeighborhood { .. } => ("EmptyNeighborhood", 19),
        Error::EmptyOccupation => ("EmptyOccupation", 20),
        Error::AllNeighborhoodsEmpty => ("AllNeighborhoodsEmpty", 21),
        Error::AllRejected { .. } => ("AllRejected", 22),
        Error::TooFewValues { .. } => ("TooFewValues", 23),
        Error::IncomparableProtocols(_) => ("IncomparableProtocols", 24),
        Error::InvalidInput(_) => ("InvalidInput", 25),
    }
}
