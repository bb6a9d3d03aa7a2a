use std::path::PathBuf;

use thiserror::Error;

use crate::raster::RasterError;

pub type Result<T> = std::result::Result<T, PipelineError>;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Raster {
        path: PathBuf,
        #[source]
        source: RasterError,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Numerical(#[from] ecam_core::Error),

    #[error("frame band {band} failed: {source}")]
    Band {
        band: usize,
        #[source]
        source: ecam_core::Error,
    },
}

impl PipelineError {
    /// 1 for usage and configuration problems, 2 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 1,
            _ => 2,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        PipelineError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn raster(path: impl Into<PathBuf>, source: RasterError) -> Self {
        PipelineError::Raster {
            path: path.into(),
            source,
        }
    }
}
