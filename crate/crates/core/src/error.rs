use thiserror::Error;

#[derive(Debug, Error)]
pub enum CaseError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed case document: {0}")]
    Json(#[from] serde_json::Error),
    #[error("duplicate {element} id {id}")]
    DuplicateId { element: &'static str, id: u32 },
    #[error("{element} {id} references missing element {reference}")]
    DanglingReference { element: &'static str, id: u32, reference: u32 },
    #[error("{element} {id}: {reason}")]
    Invalid { element: &'static str, id: u32, reason: String },
    #[error("network is not connected with all elements in service ({islands} islands)")]
    Disconnected { islands: usize },
}

impl CaseError {
    pub(crate) fn invalid(element: &'static str, id: u32, reason: impl Into<String>) -> Self {
        CaseError::Invalid { element, id, reason: reason.into() }
    }
}

/// Invalid configuration value, tagged with the offending key.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid value for `{key}`: {reason}")]
pub struct ConfigError {
    pub key: String,
    pub reason: String,
}

impl ConfigError {
    pub fn new(key: impl Into<String>, reason: impl Into<String>) -> Self {
        ConfigError { key: key.into(), reason: reason.into() }
    }
}

#[derive(Debug, Error)]
pub enum GeoError {
    #[error("network buses are co-located; disturbance area is undefined")]
    DegenerateExtent,
    #[error("gamma must lie in (0, 1], got {0}")]
    BadGamma(f64),
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error("unknown bus id {0}")]
    UnknownBus(u32),
    #[error("base case power flow did not converge")]
    BaseCaseDiverged,
    #[error("no load buses to place a disturbance on")]
    NoLoadBuses,
    #[error("empty input: {0}")]
    Empty(&'static str),
}
