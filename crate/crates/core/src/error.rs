use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("row {row} (line {line}): cannot parse {column} `{value}` as an ISO-8601 datetime with offset")]
    BadDatetime {
        row: usize,
        line: usize,
        column: String,
        value: String,
    },

    #[error("end before start on rows {}", join_rows(.rows))]
    EndBeforeStart { rows: Vec<usize> },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("invalid model: {0}")]
    Model(String),

    #[error("no available time found within {hours} hours after {from}")]
    HorizonExhausted { from: String, hours: i64 },

    #[error("datetime {0} is not covered by any recurring slot")]
    NotCovered(String),

    #[error("resource `{0}` has no calendar")]
    UnknownResource(String),

    #[error("no resource can execute activity `{0}`")]
    NoCapableResource(String),

    #[error("case {case} exceeded {limit} visits of node `{node}`")]
    LoopLimit {
        case: String,
        node: String,
        limit: usize,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by bad input data or configuration, as opposed
    /// to failures that happen while running a well-formed job.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::MissingColumn(_)
                | Error::BadDatetime { .. }
                | Error::EndBeforeStart { .. }
                | Error::Argument(_)
                | Error::Model(_)
                | Error::UnknownResource(_)
                | Error::NoCapableResource(_)
                | Error::Csv(_)
                | Error::Json(_)
        )
    }
}

fn join_rows(rows: &[usize]) -> String {
    rows.iter()
        .map(|r| r.to_string())
        .collect::<Vec<_>>()
        .join(", ")
}
