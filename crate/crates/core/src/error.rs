use thiserror::Error;

use crate::freq_map::JointPose;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter lies outside its mathematical domain (e.g. `k0 > 1`).
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("no vibration modes found above the prominence threshold")]
    NoModesFound,

    #[error("damping estimation failed: {0}")]
    Estimation(String),

    #[error("incomplete grid, missing poses: {}", format_poses(.missing))]
    Grid { missing: Vec<JointPose> },

    #[error("at pose {pose}: {source}")]
    AtPose {
        pose: JointPose,
        #[source]
        source: Box<Error>,
    },

    #[error("pose out of domain: {0}")]
    OutOfDomain(String),

    #[error("invalid simulator configuration: {0}")]
    Config(String),

    #[error("reduction undefined: unshaped amplitude is zero")]
    UndefinedReduction,

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True when the failure means "the analysis produced nothing", as opposed to
    /// bad input or I/O.
    pub fn is_no_result(&self) -> bool {
        match self {
            Error::NoModesFound => true,
            Error::AtPose { source, .. } => source.is_no_result(),
            _ => false,
        }
    }
}

fn format_poses(poses: &[JointPose]) -> String {
    poses
        .iter()
        .map(|p| p.to_string())
        .collect::<Vec<_>>()
        .join(", ")
}
