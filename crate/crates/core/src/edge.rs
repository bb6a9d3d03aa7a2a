//! Edge stencils and the modified forward model.
//!
//! With `R` the edge stencil, `P ⋆ x = (P ⋆ R⁻¹) ⋆ (R ⋆ x)`. The stencil's
//! response vanishes on a whole frequency curve, so `R⁻¹` is replaced by a
//! Tikhonov inverse `conj(H) / (|H|² + ε max|H|²)` and the modified PSF
//! `P'` is formed in the frequency domain.

use std::fmt;
use std::str::FromStr;

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::imaging::{convolve_spectrum, FrequencyField, Image2D};

/// 3x3 convolution stencil, row-major, centre tap at `[1][1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeKernel {
    taps: [[f64; 3]; 3],
}

impl EdgeKernel {
    /// Directional derivative stencil summing the horizontal and vertical
    /// central differences.
    pub const DEFAULT_TAPS: [[f64; 3]; 3] = [[0.0, -1.0, 0.0], [-1.0, 0.0, 1.0], [0.0, 1.0, 0.0]];

    /// A DC-free stencil; taps must sum to zero.
    pub fn new(taps: [[f64; 3]; 3]) -> Result<Self> {
        if taps.iter().flatten().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite { context: "edge kernel taps" });
        }
        let sum: f64 = taps.iter().flatten().sum();
        if sum != 0.0 {
            return Err(Error::param("kernel", format!("taps must sum to 0, sum to {sum}")));
        }
        Ok(Self { taps })
    }

    /// The neutral stencil (unit centre tap). Not DC-free; it exists so the
    /// modified model can be checked against the unmodified one.
    pub fn identity() -> Self {
        Self {
            taps: [[0.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 0.0]],
        }
    }

    /// Discrete Laplacian.
    pub fn laplacian() -> Self {
        Self {
            taps: [[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]],
        }
    }

    pub fn taps(&self) -> &[[f64; 3]; 3] {
        &self.taps
    }

    /// Stencil placed on a `rows x cols` grid with its centre at `(0, 0)`,
    /// negative offsets wrapping around.
    pub fn embed(&self, rows: usize, cols: usize) -> Image2D {
        let mut img = Image2D::zeros(rows, cols);
        for (a, row) in self.taps.iter().enumerate() {
            for (b, &t) in row.iter().enumerate() {
                let r = (a + rows - 1) % rows;
                let c = (b + cols - 1) % cols;
                img[(r, c)] += t;
            }
        }
        img
    }
}

impl Default for EdgeKernel {
    fn default() -> Self {
        edge_kernel_default()
    }
}

impl fmt::Display for EdgeKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.taps.iter().flatten().map(|t| t.to_string()).collect();
        f.write_str(&parts.join(" "))
    }
}

/// Nine whitespace-separated reals, row-major.
impl FromStr for EdgeKernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let values: Vec<f64> = s
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>()
                    .map_err(|_| Error::param("kernel", format!("`{tok}` is not a number")))
            })
            .collect::<Result<_>>()?;
        if values.len() != 9 {
            return Err(Error::param("kernel", format!("expected 9 taps, got {}", values.len())));
        }
        let mut taps = [[0.0; 3]; 3];
        for (i, v) in values.into_iter().enumerate() {
            taps[i / 3][i % 3] = v;
        }
        EdgeKernel::new(taps)
    }
}

pub fn edge_kernel_default() -> EdgeKernel {
    EdgeKernel {
        taps: EdgeKernel::DEFAULT_TAPS,
    }
}

/// Default `ε`; the floor `(ε max|H|)²` is then `1e-3 max|H|²`.
pub const DEFAULT_EPSILON: f64 = 0.031_622_776_601_683_79;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InverseSpec {
    /// Regularization floor relative to `max |H|`: the inverse is damped
    /// below `|H| ≈ ε max|H|`.
    pub epsilon: f64,
}

impl InverseSpec {
    pub fn new(epsilon: f64) -> Result<Self> {
        let spec = Self { epsilon };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::param("epsilon", format!("must be > 0, got {}", self.epsilon)));
        }
        Ok(())
    }
}

impl Default for InverseSpec {
    fn default() -> Self {
        Self { epsilon: DEFAULT_EPSILON }
    }
}

/// Periodic convolution of `obj` with the centred stencil. Output is signed.
pub fn apply_edge_operator(obj: &Image2D, k: &EdgeKernel) -> Image2D {
    let (rows, cols) = obj.shape();
    let mut out = Image2D::zeros(rows, cols);
    // Direct stencil: exact and cheaper than a transform for 3x3 taps.
    for r in 0..rows {
        for c in 0..cols {
            let mut acc = 0.0;
            for (a, trow) in k.taps.iter().enumerate() {
                for (b, &t) in trow.iter().enumerate() {
                    if t == 0.0 {
                        continue;
                    }
                    let sr = (r + rows + 1 - a) % rows;
                    let sc = (c + cols + 1 - b) % cols;
                    acc += t * obj[(sr, sc)];
                }
            }
            out[(r, c)] = acc;
        }
    }
    out
}

/// Transfer function `H(u, v)` of the stencil on a `rows x cols` grid.
pub fn kernel_frequency_response(k: &EdgeKernel, rows: usize, cols: usize) -> FrequencyField {
    FrequencyField::forward(&k.embed(rows, cols))
}

/// `conj(H) / (|H|² + (ε max|H|)²)`, finite everywhere and bounded by
/// `1 / (2 ε max|H|)`.
pub fn regularized_inverse_response(h: &FrequencyField, spec: &InverseSpec) -> Result<FrequencyField> {
    spec.validate()?;
    let peak = h.max_norm();
    if peak == 0.0 {
        return Err(Error::ZeroOperator("edge kernel response is identically zero"));
    }
    let floor = (spec.epsilon * peak).powi(2);
    Ok(h.map(|z| z.conj() / Complex64::new(z.norm_sqr() + floor, 0.0)))
}

/// Modified PSF `P'` with `P' ⋆ (R ⋆ x) ≈ P ⋆ x` away from the zeros of `H`.
pub fn modified_psf(psf: &Image2D, k: &EdgeKernel, spec: &InverseSpec) -> Result<Image2D> {
    let (rows, cols) = psf.shape();
    let h = kernel_frequency_response(k, rows, cols);
    let inv = regularized_inverse_response(&h, spec)?;
    let spectrum = FrequencyField::forward(psf).multiply(&inv)?;
    let (out, imag) = spectrum.inverse_real();
    let scale = out.max_abs().max(f64::MIN_POSITIVE);
    if imag > 1e-9 * scale.max(1.0) {
        return Err(Error::NonFinite {
            context: "modified PSF has a non-negligible imaginary part",
        });
    }
    Ok(out)
}

/// `P' ⋆ e` given the edge image `e`; convenience for consistency checks.
pub fn apply_modified_model(psf_mod: &Image2D, edge: &Image2D) -> Result<Image2D> {
    convolve_spectrum(edge, &FrequencyField::forward(psf_mod))
}
