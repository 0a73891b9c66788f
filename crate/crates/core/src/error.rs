use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("row {row}: {message}")]
    MalformedRow { row: usize, message: String },

    #[error("department `{0}` is not present in the code map")]
    UnmappedDepartment(String),

    #[error("case `{0}` has no events")]
    EmptyCase(String),

    #[error("invalid code map: {0}")]
    InvalidCodeMap(String),

    #[error("invalid synthesis spec: {0}")]
    InvalidSynthSpec(String),

    #[error("k = {k} exceeds the number of distinct sequences ({distinct})")]
    TooManyClusters { k: usize, distinct: usize },

    #[error("invalid cluster range: {0}")]
    InvalidRange(String),

    #[error("no k in the scanned range produced a defined CV ratio")]
    NoValidK,

    #[error("no training samples")]
    NoSamples,

    #[error("template `{template}` contains `{letter}`, which is outside the code alphabet")]
    InvalidTemplate { template: String, letter: char },

    #[error("no alignments for cluster {0}")]
    NoAlignments(usize),

    #[error("state {state} of cluster {cluster} has an empty {pool} pool")]
    EmptyPool {
        cluster: String,
        state: String,
        pool: &'static str,
    },

    #[error("END is unreachable from state {state} in {chain}")]
    UnreachableEnd { chain: String, state: String },

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("empty sample")]
    EmptySample,

    #[error("scenario grids do not match: {0}")]
    GridMismatch(String),

    #[error("{0}")]
    Invalid(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
