//! Fixed-grid rasters and periodic convolution.
//!
//! All model algebra runs on a zero-padded grid with periodic boundaries so
//! that every convolution operator is diagonal in the discrete Fourier basis.
//! The forward transform is unnormalized; the inverse divides by the pixel
//! count.

use std::cell::RefCell;
use std::ops::{Index, IndexMut};

use rustfft::num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};

use crate::error::{Error, Result};

/// Real-valued raster stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Image2D {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Image2D {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        check_dims(rows, cols)?;
        if data.len() != rows * cols {
            return Err(Error::InvalidDimensions {
                rows,
                cols,
                reason: "data length does not equal rows * cols",
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "image data",
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// # Panics
    /// Panics if either dimension is zero.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    /// # Panics
    /// Panics if either dimension is zero.
    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        assert!(rows > 0 && cols > 0, "image dimensions must be positive");
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut img = Self::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                img.data[r * cols + c] = f(r, c);
            }
        }
        img
    }

    /// Unit impulse at `(row, col)`.
    pub fn delta(rows: usize, cols: usize, row: usize, col: usize) -> Self {
        let mut img = Self::zeros(rows, cols);
        img[(row, col)] = 1.0;
        img
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn ensure_same_shape(&self, other: &Image2D) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::shape(self.shape(), other.shape()));
        }
        Ok(())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn dot(&self, other: &Image2D) -> Result<f64> {
        self.ensure_same_shape(other)?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image2D {
        Image2D {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Image2D, f: impl Fn(f64, f64) -> f64) -> Result<Image2D> {
        self.ensure_same_shape(other)?;
        Ok(Image2D {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Image2D) -> Result<Image2D> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Image2D) -> Result<Image2D> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Image2D {
        self.map(|v| v * s)
    }

    /// Intensity-weighted centroid `(row, col)`; `None` when the total weight is zero.
    pub fn centroid(&self) -> Option<(f64, f64)> {
        let mut total = 0.0;
        let (mut sr, mut sc) = (0.0, 0.0);
        for r in 0..self.rows {
            for (c, &v) in self.row(r).iter().enumerate() {
                total += v;
                sr += v * r as f64;
                sc += v * c as f64;
            }
        }
        (total != 0.0).then(|| (sr / total, sc / total))
    }
}

impl Index<(usize, usize)> for Image2D {
    type Output = f64;

    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for Image2D {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

fn check_dims(rows: usize, cols: usize) -> Result<()> {
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidDimensions {
            rows,
            cols,
            reason: "dimensions must be positive",
        });
    }
    Ok(())
}

/// Boolean raster over measurement pixels; `true` marks a sampled pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    rows: usize,
    cols: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(rows: usize, cols: usize, bits: Vec<bool>) -> Result<Self> {
        check_dims(rows, cols)?;
        if bits.len() != rows * cols {
            return Err(Error::InvalidDimensions {
                rows,
                cols,
                reason: "mask length does not equal rows * cols",
            });
        }
        Ok(Self { rows, cols, bits })
    }

    pub fn full(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "mask dimensions must be positive");
        Self {
            rows,
            cols,
            bits: vec![true; rows * cols],
        }
    }

    /// Mask selecting the half-open row range `start..end`.
    pub fn rows_band(rows: usize, cols: usize, start: usize, end: usize) -> Self {
        let mut mask = Self {
            rows,
            cols,
            bits: vec![false; rows * cols],
        };
        for r in start..end.min(rows) {
            mask.bits[r * cols..(r + 1) * cols].fill(true);
        }
        mask
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        self.bits[r * self.cols + c]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_full(&self) -> bool {
        self.bits.iter().all(|&b| b)
    }

    pub fn and(&self, other: &Mask) -> Result<Mask> {
        if self.shape() != other.shape() {
            return Err(Error::shape(self.shape(), other.shape()));
        }
        Ok(Mask {
            rows: self.rows,
            cols: self.cols,
            bits: self.bits.iter().zip(&other.bits).map(|(a, b)| *a && *b).collect(),
        })
    }

    /// Zero every unsampled pixel of `img`.
    pub fn apply(&self, img: &Image2D) -> Result<Image2D> {
        if self.shape() != img.shape() {
            return Err(Error::shape(self.shape(), img.shape()));
        }
        let mut out = img.clone();
        self.apply_in_place(&mut out);
        Ok(out)
    }

    pub(crate) fn apply_in_place(&self, img: &mut Image2D) {
        debug_assert_eq!(self.shape(), img.shape());
        for (v, &keep) in img.data_mut().iter_mut().zip(&self.bits) {
            if !keep {
                *v = 0.0;
            }
        }
    }

    /// 1.0 where sampled, 0.0 elsewhere.
    pub fn to_image(&self) -> Image2D {
        Image2D {
            rows: self.rows,
            cols: self.cols,
            data: self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        }
    }

    /// Inverse of [`Mask::to_image`]; any nonzero pixel counts as sampled.
    pub fn from_image(img: &Image2D) -> Mask {
        Mask {
            rows: img.rows,
            cols: img.cols,
            bits: img.data.iter().map(|&v| v != 0.0).collect(),
        }
    }
}

/// Working grid plus the padded grid that all convolutions run on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
    pub pad_rows: usize,
    pub pad_cols: usize,
}

impl GridSpec {
    /// Working grid with the default 2x padding in each dimension.
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        Self::with_padding(rows, cols, 2 * rows, 2 * cols)
    }

    pub fn with_padding(rows: usize, cols: usize, pad_rows: usize, pad_cols: usize) -> Result<Self> {
        check_dims(rows, cols)?;
        if pad_rows < rows || pad_cols < cols {
            return Err(Error::InvalidDimensions {
                rows: pad_rows,
                cols: pad_cols,
                reason: "padded grid smaller than working grid",
            });
        }
        Ok(Self {
            rows,
            cols,
            pad_rows,
            pad_cols,
        })
    }

    pub fn working_shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn padded_shape(&self) -> (usize, usize) {
        (self.pad_rows, self.pad_cols)
    }

    pub fn padded_pixels(&self) -> usize {
        self.pad_rows * self.pad_cols
    }
}

/// Complex spectrum of a raster, DC at index `(0, 0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyField {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl FrequencyField {
    pub fn new(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        check_dims(rows, cols)?;
        if data.len() != rows * cols {
            return Err(Error::InvalidDimensions {
                rows,
                cols,
                reason: "spectrum length does not equal rows * cols",
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Unnormalized forward DFT of a real raster.
    pub fn forward(img: &Image2D) -> Self {
        let mut data: Vec<Complex64> = img.data.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fft_2d(img.rows, img.cols, &mut data, FftDirection::Forward);
        Self {
            rows: img.rows,
            cols: img.cols,
            data,
        }
    }

    /// Inverse DFT, scaled by `1 / (rows * cols)`.
    pub fn inverse(&self) -> Vec<Complex64> {
        let mut data = self.data.clone();
        fft_2d(self.rows, self.cols, &mut data, FftDirection::Inverse);
        let scale = 1.0 / (self.rows * self.cols) as f64;
        for v in &mut data {
            *v *= scale;
        }
        data
    }

    /// Inverse transform keeping the real part, together with the largest
    /// discarded imaginary magnitude.
    pub fn inverse_real(&self) -> (Image2D, f64) {
        let spatial = self.inverse();
        let max_imag = spatial.iter().fold(0.0f64, |m, z| m.max(z.im.abs()));
        let img = Image2D {
            rows: self.rows,
            cols: self.cols,
            data: spatial.into_iter().map(|z| z.re).collect(),
        };
        (img, max_imag)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn get(&self, u: usize, v: usize) -> Complex64 {
        self.data[u * self.cols + v]
    }

    pub fn max_norm(&self) -> f64 {
        self.data.iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> FrequencyField {
        FrequencyField {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| f(z)).collect(),
        }
    }

    pub fn multiply(&self, other: &FrequencyField) -> Result<FrequencyField> {
        if self.shape() != other.shape() {
            return Err(Error::shape(self.shape(), other.shape()));
        }
        Ok(FrequencyField {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a * b).collect(),
        })
    }
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// In-place 2D DFT of a row-major buffer: rows first, then columns.
fn fft_2d(rows: usize, cols: usize, buf: &mut [Complex64], direction: FftDirection) {
    let (row_fft, col_fft) = PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        (p.plan_fft(cols, direction), p.plan_fft(rows, direction))
    });
    let scratch_len = row_fft
        .get_inplace_scratch_len()
        .max(col_fft.get_inplace_scratch_len());
    let mut scratch = vec![Complex64::default(); scratch_len];

    for row in buf.chunks_exact_mut(cols) {
        row_fft.process_with_scratch(row, &mut scratch);
    }

    let mut column = vec![Complex64::default(); rows];
    for c in 0..cols {
        for (r, slot) in column.iter_mut().enumerate() {
            *slot = buf[r * cols + c];
        }
        col_fft.process_with_scratch(&mut column, &mut scratch);
        for (r, &v) in column.iter().enumerate() {
            buf[r * cols + c] = v;
        }
    }
}

/// Periodic convolution `(a ⋆ b)(i, j) = Σ a(k, l) b(i - k, j - l)` with
/// indices taken modulo the grid.
pub fn circular_convolve(a: &Image2D, b: &Image2D) -> Result<Image2D> {
    a.ensure_same_shape(b)?;
    let fa = FrequencyField::forward(a);
    let fb = FrequencyField::forward(b);
    Ok(fa.multiply(&fb)?.inverse_real().0)
}

/// Convolve `x` with a kernel given by its precomputed spectrum.
pub fn convolve_spectrum(x: &Image2D, kernel: &FrequencyField) -> Result<Image2D> {
    if x.shape() != kernel.shape() {
        return Err(Error::shape(x.shape(), kernel.shape()));
    }
    let fx = FrequencyField::forward(x);
    Ok(fx.multiply(kernel)?.inverse_real().0)
}

/// Embed `img` in the centre of a zero field of the grid's padded size.
pub fn pad_center(img: &Image2D, grid: &GridSpec) -> Result<Image2D> {
    let (pr, pc) = grid.padded_shape();
    if img.rows > pr || img.cols > pc {
        return Err(Error::shape(img.shape(), (pr, pc)));
    }
    let r0 = (pr - img.rows) / 2;
    let c0 = (pc - img.cols) / 2;
    let mut out = Image2D::zeros(pr, pc);
    for r in 0..img.rows {
        out.row_mut(r0 + r)[c0..c0 + img.cols].copy_from_slice(img.row(r));
    }
    Ok(out)
}

/// Extract the central `rows x cols` window; inverse of [`pad_center`].
pub fn crop_center(img: &Image2D, rows: usize, cols: usize) -> Result<Image2D> {
    check_dims(rows, cols)?;
    if rows > img.rows || cols > img.cols {
        return Err(Error::shape((rows, cols), img.shape()));
    }
    let r0 = (img.rows - rows) / 2;
    let c0 = (img.cols - cols) / 2;
    let mut data = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        data.extend_from_slice(&img.row(r0 + r)[c0..c0 + cols]);
    }
    Ok(Image2D { rows, cols, data })
}

/// Periodic point reflection `(i, j) -> (-i mod R, -j mod C)`.
///
/// Convolving with the flipped kernel applies the adjoint of convolving with
/// the original.
pub fn flip_both_axes(img: &Image2D) -> Image2D {
    let (rows, cols) = img.shape();
    Image2D::from_fn(rows, cols, |r, c| img[((rows - r) % rows, (cols - c) % cols)])
}

/// Periodic shift by whole pixels: output(i, j) = img(i - dr, j - dc).
pub fn roll(img: &Image2D, dr: isize, dc: isize) -> Image2D {
    let (rows, cols) = img.shape();
    let (ri, ci) = (rows as isize, cols as isize);
    Image2D::from_fn(rows, cols, |r, c| {
        let sr = (r as isize - dr).rem_euclid(ri) as usize;
        let sc = (c as isize - dc).rem_euclid(ci) as usize;
        img[(sr, sc)]
    })
}
