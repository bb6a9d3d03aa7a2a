use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {left_rows}x{left_cols} vs {right_rows}x{right_cols}")]
    ShapeMismatch {
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },

    #[error("invalid dimensions {rows}x{cols}: {reason}")]
    InvalidDimensions {
        rows: usize,
        cols: usize,
        reason: &'static str,
    },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("non-finite value encountered in {context}")]
    NonFinite { context: &'static str },

    #[error("objective became non-finite at iteration {iteration}")]
    Diverged { iteration: usize },

    #[error("operator is identically zero: {0}")]
    ZeroOperator(&'static str),

    #[error("object leaves the working grid at t = {time} ms")]
    OutOfGrid { time: f64 },
}

impl Error {
    pub(crate) fn shape(a: (usize, usize), b: (usize, usize)) -> Self {
        Error::ShapeMismatch {
            left_rows: a.0,
            left_cols: a.1,
            right_rows: b.0,
            right_cols: b.1,
        }
    }

    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
