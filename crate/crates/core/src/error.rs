use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },

    /// The coupling makes the quadratic form of the network indefinite.
    #[error("coupling {coupling} violates the positivity bound C > {bound}: the network is not positive definite")]
    PositivityBound { coupling: f64, bound: f64 },

    #[error("no fixed point at lambda = {lambda}{}", threshold_note(*.threshold))]
    NoFixedPoint { lambda: f64, threshold: Option<f64> },

    #[error("band edges are undefined for these parameters ({0})")]
    BandUndefined(&'static str),

    #[error("singular Vernon transform at lambda = {lambda}")]
    Pole { lambda: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("tree has {nodes} nodes, above the cap of {cap}")]
    TooLarge { nodes: usize, cap: usize },

    #[error("accuracy: {0}")]
    Accuracy(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

fn threshold_note(threshold: Option<f64>) -> String {
    match threshold {
        Some(l) => format!(" (fixed point exists only for lambda >= {l})"),
        None => String::new(),
    }
}

/// Coarse classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Domain,
    Numerical,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidParam { .. } | Error::Shape(_) | Error::TooLarge { .. } => ErrorKind::Config,
            Error::PositivityBound { .. }
            | Error::NoFixedPoint { .. }
            | Error::BandUndefined(_)
            | Error::Pole { .. } => ErrorKind::Domain,
            Error::Accuracy(_) | Error::Numerical(_) => ErrorKind::Numerical,
        }
    }

    /// Short stable identifier, suitable for machine parsing.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidParam { .. } => "invalid-param",
            Error::PositivityBound { .. } => "positivity-bound",
            Error::NoFixedPoint { .. } => "no-fixed-point",
            Error::BandUndefined(_) => "band-undefined",
            Error::Pole { .. } => "pole",
            Error::Shape(_) => "shape",
            Error::TooLarge { .. } => "too-large",
            Error::Accuracy(_) => "accuracy",
            Error::Numerical(_) => "numerical",
        }
    }
}
