use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("empty face: {0}")]
    EmptyFace(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("registration of scan {scan_id} failed: {source}")]
    Registration {
        scan_id: String,
        #[source]
        source: alloc::boxed::Box<Error>,
    },
    #[error("undefined direction: point coincides with the projection center")]
    UndefinedDirection,
    #[error("zero-norm signal cannot be normalized")]
    ZeroNorm,
    #[error("all residuals are zero")]
    ZeroResidual,
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
}
