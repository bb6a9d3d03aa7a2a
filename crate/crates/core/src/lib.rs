//! Simulation and reconstruction for a lensless diffuser camera that recovers
//! edge maps directly from single-shot speckle measurements.
//!
//! The measurement model is a masked periodic convolution `y = S (P ⋆ x)` on a
//! zero-padded grid. Folding a DC-free edge stencil `R` into the model gives a
//! modified PSF `P'` with `P' ⋆ (R ⋆ x) ≈ P ⋆ x`, so a TV-regularized solver run
//! against `P'` returns the edge image without reconstructing the object first.
//!
//! Modules:
//! - [`imaging`]: rasters, FFT-based periodic convolution, padding utilities.
//! - [`sim`]: synthetic speckle PSFs, static and rolling-shutter measurements.
//! - [`edge`]: edge stencils, regularized inverse response, modified PSF.
//! - [`solver`]: two-step iterative shrinkage/thresholding with TV prox.
//! - [`metrics`]: 8-bit quantization, MSE, PSNR, information entropy.

pub mod edge;
pub mod error;
pub mod imaging;
pub mod metrics;
pub mod sim;
pub mod solver;

pub use error::{Error, Result};
pub use imaging::{FrequencyField, GridSpec, Image2D, Mask};
