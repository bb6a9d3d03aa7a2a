//! Command-line pipeline for the diffuser edge camera: PSF synthesis,
//! measurement simulation, edge reconstruction, baseline comparison,
//! parameter sweeps and rolling-shutter motion capture.

pub mod config;
pub mod error;
pub mod pipeline;
pub mod raster;
pub mod report;
pub mod shapes;

pub use config::{ObjectSource, RunConfig};
pub use error::{PipelineError, Result};
pub use report::{MetricsRecord, MetricsReport, Method};
