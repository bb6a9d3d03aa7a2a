//! Synthetic diffuser camera: speckle PSFs, sampling masks, static and
//! rolling-shutter measurements.

use std::ops::Range;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::imaging::{circular_convolve, pad_center, FrequencyField, GridSpec, Image2D, Mask};

/// Minimum number of retained speckle pixels for a usable PSF.
pub const MIN_SPECKLES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsfParams {
    pub seed: u64,
    /// Gaussian low-pass width in pixels; sets the speckle grain size.
    pub grain_sigma: f64,
    /// Fraction of brightest pixels kept.
    pub density: f64,
    pub grid: GridSpec,
}

impl PsfParams {
    pub fn new(grid: GridSpec, seed: u64) -> Self {
        Self {
            seed,
            grain_sigma: 1.0,
            density: 0.1,
            grid,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.grain_sigma > 0.0 && self.grain_sigma.is_finite()) {
            return Err(Error::param("grain_sigma", format!("must be > 0, got {}", self.grain_sigma)));
        }
        if !(self.density > 0.0 && self.density <= 1.0) {
            return Err(Error::param("density", format!("must lie in (0, 1], got {}", self.density)));
        }
        Ok(())
    }
}

/// Speckle-like PSF on the padded grid: seeded uniform noise, Gaussian
/// low-pass, keep the top `density` fraction, normalize to unit sum.
pub fn synthesize_psf(params: &PsfParams) -> Result<Image2D> {
    params.validate()?;
    let (rows, cols) = params.grid.padded_shape();
    let pixels = rows * cols;
    let keep = (params.density * pixels as f64).round() as usize;
    if keep < MIN_SPECKLES {
        return Err(Error::param(
            "density",
            format!("retains {keep} pixels, need at least {MIN_SPECKLES}"),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let noise = Image2D::from_fn(rows, cols, |_, _| rng.random::<f64>());

    // Periodic Gaussian low-pass applied as a transfer function.
    let two_pi_sq_sigma_sq = 2.0 * std::f64::consts::PI.powi(2) * params.grain_sigma.powi(2);
    let spectrum = FrequencyField::forward(&noise);
    let filtered = spectrum.data().iter().enumerate().map(|(idx, &z)| {
        let fu = signed_frequency(idx / cols, rows);
        let fv = signed_frequency(idx % cols, cols);
        z * (-two_pi_sq_sigma_sq * (fu * fu + fv * fv)).exp()
    });
    let spectrum = FrequencyField::new(rows, cols, filtered.collect())?;
    let (smooth, _) = spectrum.inverse_real();

    // Rank by value, ties broken by index so the cut is deterministic.
    let mut order: Vec<usize> = (0..pixels).collect();
    order.sort_by(|&a, &b| {
        smooth.data()[b]
            .total_cmp(&smooth.data()[a])
            .then(a.cmp(&b))
    });
    let mut psf = Image2D::zeros(rows, cols);
    for &idx in &order[..keep] {
        psf.data_mut()[idx] = smooth.data()[idx].max(0.0);
    }
    let total = psf.sum();
    if total <= 0.0 {
        return Err(Error::ZeroOperator("synthesized PSF has no energy"));
    }
    Ok(psf.scale(1.0 / total))
}

fn signed_frequency(k: usize, n: usize) -> f64 {
    let k = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
    k / n as f64
}

/// Rescale a nonnegative raster to unit sum.
pub fn normalize_psf(psf: &Image2D) -> Result<Image2D> {
    if psf.data().iter().any(|&v| v < 0.0) {
        return Err(Error::param("psf", "PSF must be nonnegative"));
    }
    let total = psf.sum();
    if total <= 0.0 {
        return Err(Error::ZeroOperator("PSF sums to zero"));
    }
    Ok(psf.scale(1.0 / total))
}

/// PSF and sampling mask defining `y = S (P ⋆ x)` on the padded grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardModel {
    psf: Image2D,
    mask: Mask,
    grid: GridSpec,
}

impl ForwardModel {
    pub fn new(psf: Image2D, mask: Mask, grid: GridSpec) -> Result<Self> {
        if psf.shape() != grid.padded_shape() {
            return Err(Error::shape(psf.shape(), grid.padded_shape()));
        }
        if mask.shape() != psf.shape() {
            return Err(Error::shape(mask.shape(), psf.shape()));
        }
        if psf.data().iter().any(|&v| v < 0.0) {
            return Err(Error::param("psf", "PSF must be nonnegative"));
        }
        let total = psf.sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::param("psf", format!("PSF must sum to 1, sums to {total}")));
        }
        Ok(Self { psf, mask, grid })
    }

    pub fn psf(&self) -> &Image2D {
        &self.psf
    }

    pub fn mask(&self) -> &Mask {
        &self.mask
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn with_mask(&self, mask: Mask) -> Result<Self> {
        Self::new(self.psf.clone(), mask, self.grid)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseKind {
    #[default]
    None,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub sigma: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn gaussian(sigma: f64, seed: u64) -> Self {
        Self {
            kind: NoiseKind::Gaussian,
            sigma,
            seed,
        }
    }

    fn add_to(&self, img: &mut Image2D) -> Result<()> {
        match self.kind {
            NoiseKind::None => Ok(()),
            NoiseKind::Gaussian => {
                let normal = Normal::new(0.0, self.sigma)
                    .map_err(|e| Error::param("sigma", e.to_string()))?;
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                for v in img.data_mut() {
                    *v += normal.sample(&mut rng);
                }
                Ok(())
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::param("sigma", format!("must be >= 0, got {}", self.sigma)));
        }
        Ok(())
    }
}

/// Uniformly random mask with exactly `round(rate * pixels)` sampled pixels
/// over the padded measurement grid. The pixels are a prefix of one seeded
/// permutation, so masks sharing a seed are nested across rates.
pub fn make_sampling_mask(grid: &GridSpec, rate: f64, seed: u64) -> Result<Mask> {
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(Error::param("rate", format!("must lie in (0, 1], got {rate}")));
    }
    let (rows, cols) = grid.padded_shape();
    let pixels = rows * cols;
    let count = (rate * pixels as f64).round() as usize;
    if count == 0 {
        return Err(Error::param("rate", format!("{rate} samples no pixels of {pixels}")));
    }
    let mut order: Vec<usize> = (0..pixels).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut bits = vec![false; pixels];
    for &idx in &order[..count] {
        bits[idx] = true;
    }
    Mask::new(rows, cols, bits)
}

/// `mask ∘ (obj ⋆ psf + noise)` on the padded grid.
pub fn simulate_measurement(obj: &Image2D, model: &ForwardModel, noise: &NoiseSpec) -> Result<Image2D> {
    obj.ensure_same_shape(model.psf())?;
    if obj.data().iter().any(|&v| v < 0.0) {
        return Err(Error::param("object", "intensity object must be nonnegative"));
    }
    noise.validate()?;
    let mut y = circular_convolve(obj, model.psf())?;
    noise.add_to(&mut y)?;
    model.mask().apply_in_place(&mut y);
    Ok(y)
}

/// Per-row exposure schedule of a rolling-shutter sensor, partitioned into
/// `n_frames` contiguous row bands.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShutterTimeline {
    pub n_rows: usize,
    /// Milliseconds between successive row starts.
    pub line_time: f64,
    /// Milliseconds each row integrates.
    pub exposure_time: f64,
    pub n_frames: usize,
}

impl ShutterTimeline {
    pub fn new(n_rows: usize, line_time: f64, exposure_time: f64, n_frames: usize) -> Result<Self> {
        let tl = Self {
            n_rows,
            line_time,
            exposure_time,
            n_frames,
        };
        tl.validate()?;
        Ok(tl)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_frames == 0 || self.n_frames > self.n_rows {
            return Err(Error::param(
                "frames",
                format!("need 1..={} frames, got {}", self.n_rows, self.n_frames),
            ));
        }
        if !(self.line_time > 0.0 && self.line_time.is_finite()) {
            return Err(Error::param("line_time", "must be > 0"));
        }
        if !(self.exposure_time > 0.0 && self.exposure_time.is_finite()) {
            return Err(Error::param("exposure_time", "must be > 0"));
        }
        Ok(())
    }

    pub fn band_size(&self) -> usize {
        self.n_rows / self.n_frames
    }

    /// Rows belonging to frame `k`; the last band absorbs the remainder.
    pub fn band(&self, k: usize) -> Range<usize> {
        assert!(k < self.n_frames, "frame index out of range");
        let size = self.band_size();
        let start = k * size;
        let end = if k + 1 == self.n_frames { self.n_rows } else { start + size };
        start..end
    }

    pub fn bands(&self) -> impl Iterator<Item = Range<usize>> + '_ {
        (0..self.n_frames).map(|k| self.band(k))
    }

    /// Time stamp of frame `k`: exposure start of its first row.
    pub fn frame_time(&self, k: usize) -> f64 {
        self.band(k).start as f64 * self.line_time
    }

    pub fn frame_times(&self) -> Vec<f64> {
        (0..self.n_frames).map(|k| self.frame_time(k)).collect()
    }

    /// Last instant any row is still integrating.
    pub fn span(&self) -> f64 {
        (self.n_rows - 1) as f64 * self.line_time + self.exposure_time
    }

    pub fn band_mask(&self, k: usize, cols: usize) -> Mask {
        let band = self.band(k);
        Mask::rows_band(self.n_rows, cols, band.start, band.end)
    }
}

/// Rigid lateral translation of a base object on the working grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionModel {
    pub base_object: Image2D,
    /// `(dx, dy)` in pixels per millisecond; `dx` moves along columns.
    pub velocity: (f64, f64),
}

impl MotionModel {
    pub fn new(base_object: Image2D, velocity: (f64, f64)) -> Self {
        Self { base_object, velocity }
    }

    pub fn displacement(&self, t: f64) -> (f64, f64) {
        (self.velocity.0 * t, self.velocity.1 * t)
    }
}

/// Base object shifted by `velocity * t`, bilinear splatting so pixel mass is
/// conserved while the object stays on the grid.
pub fn render_frame(motion: &MotionModel, t: f64) -> Result<Image2D> {
    if !t.is_finite() {
        return Err(Error::param("t", "time must be finite"));
    }
    let base = &motion.base_object;
    let (rows, cols) = base.shape();
    let (dx, dy) = motion.displacement(t);
    let (fr, fc) = (dy.floor(), dx.floor());
    let (wr, wc) = (dy - fr, dx - fc);
    let (ir, ic) = (fr as isize, fc as isize);

    let mut out = Image2D::zeros(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            let v = base[(r, c)];
            if v == 0.0 {
                continue;
            }
            let taps = [
                (0, 0, (1.0 - wr) * (1.0 - wc)),
                (0, 1, (1.0 - wr) * wc),
                (1, 0, wr * (1.0 - wc)),
                (1, 1, wr * wc),
            ];
            for (or, oc, w) in taps {
                if w == 0.0 {
                    continue;
                }
                let tr = r as isize + ir + or;
                let tc = c as isize + ic + oc;
                if tr < 0 || tc < 0 || tr >= rows as isize || tc >= cols as isize {
                    return Err(Error::OutOfGrid { time: t });
                }
                out[(tr as usize, tc as usize)] += v * w;
            }
        }
    }
    Ok(out)
}

/// Encode a moving scene into one rolling-shutter frame. Each row band sees
/// the scene frozen at its frame time.
pub fn simulate_rolling_shutter(
    motion: &MotionModel,
    model: &ForwardModel,
    timeline: &ShutterTimeline,
    noise: &NoiseSpec,
) -> Result<Image2D> {
    let grid = model.grid();
    if motion.base_object.shape() != grid.working_shape() {
        return Err(Error::shape(motion.base_object.shape(), grid.working_shape()));
    }
    timeline.validate()?;
    if timeline.n_rows != grid.pad_rows {
        return Err(Error::param(
            "timeline",
            format!("timeline has {} rows, sensor has {}", timeline.n_rows, grid.pad_rows),
        ));
    }
    noise.validate()?;

    let mut y = Image2D::zeros(grid.pad_rows, grid.pad_cols);
    for k in 0..timeline.n_frames {
        let frame = render_frame(motion, timeline.frame_time(k))?;
        let static_y = circular_convolve(&pad_center(&frame, grid)?, model.psf())?;
        for r in timeline.band(k) {
            y.row_mut(r).copy_from_slice(static_y.row(r));
        }
    }
    noise.add_to(&mut y)?;
    model.mask().apply_in_place(&mut y);
    Ok(y)
}
