//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the estimation, planning, and simulation layers.
#[derive(Debug, Error)]
pub enum Error {
    /// A joint sits behind the camera (or closer than the depth epsilon).
    #[error("joint {joint} has depth {depth:.6} m, below the minimum {min:.6} m")]
    NonPositiveDepth { joint: usize, depth: f64, min: f64 },

    /// Camera position and look-at target coincide, or the view direction is
    /// parallel to the world up axis.
    #[error("degenerate look-at: {0}")]
    DegenerateLookAt(String),

    /// The subject projects outside the image bounds (plus margin) or behind
    /// the camera; used to filter candidate viewpoints.
    #[error("subject not visible: {0}")]
    SubjectNotVisible(String),

    /// Malformed row or header while reading a CSV file.
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    /// Bone lengths drift across the frames of a motion sequence.
    #[error("bone {bone} length drifts by {drift:.6} m (max {max:.6}) at frame {frame}")]
    Topology {
        bone: usize,
        frame: usize,
        drift: f64,
        max: f64,
    },

    /// A 3D detection carries no usable bone structure (all joints coincident).
    #[error("degenerate detection: {0}")]
    DegenerateDetection(String),

    /// The energy became non-finite during descent.
    #[error("optimization diverged: {0}")]
    Diverged(String),

    /// Calibration needs at least two distinct viewpoints to observe depth.
    #[error("calibration needs >= 2 distinct viewpoints, got {0}")]
    InsufficientViews(usize),

    /// Eigendecomposition or another linear-algebra step failed.
    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    /// Every candidate viewpoint was discarded by the visibility filter.
    #[error("no visible candidate viewpoint")]
    NoVisibleCandidate,

    /// A flight log cannot identify the model parameters.
    #[error("degenerate flight log: {0}")]
    DegenerateLog(String),

    /// Invalid experiment configuration.
    #[error("invalid config: {0}")]
    Config(String),

    /// An I/O error, annotated with the path involved.
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// A module error that aborted an experiment, annotated with the frame.
    #[error("at frame {frame}: {source}")]
    Run {
        frame: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
