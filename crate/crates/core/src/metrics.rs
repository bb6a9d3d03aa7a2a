//! Image-quality scores on 8-bit quantized rasters.

use crate::edge::{apply_edge_operator, EdgeKernel};
use crate::error::Result;
use crate::imaging::Image2D;

pub const MAX_LEVEL: f64 = 255.0;

/// Min-max rescale to `[0, 255]` and round half away from zero. A constant
/// image maps to all zeros.
pub fn quantize_8bit(x: &Image2D) -> Image2D {
    let (lo, hi) = (x.min(), x.max());
    let range = hi - lo;
    if range <= 0.0 || !range.is_finite() {
        return Image2D::zeros(x.rows(), x.cols());
    }
    x.map(|v| ((v - lo) / range * MAX_LEVEL).round())
}

/// Mean squared pixel difference.
pub fn mse(i: &Image2D, k: &Image2D) -> Result<f64> {
    i.ensure_same_shape(k)?;
    let sum: f64 = i.data().iter().zip(k.data()).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(sum / i.len() as f64)
}

/// `10 log10(255² / MSE)` in dB; identical inputs give `f64::INFINITY`.
pub fn psnr(i: &Image2D, k: &Image2D) -> Result<f64> {
    let m = mse(i, k)?;
    if m == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (MAX_LEVEL * MAX_LEVEL / m).log10())
}

/// Shannon entropy in bits of the quantized pixel histogram.
///
/// Levels `0..=255` are grouped into `bins` equal-width bins.
pub fn information_entropy(x: &Image2D, bins: usize) -> f64 {
    let bins = bins.clamp(1, 256);
    let q = quantize_8bit(x);
    let mut hist = vec![0usize; bins];
    for &v in q.data() {
        let level = v as usize;
        hist[(level * bins / 256).min(bins - 1)] += 1;
    }
    let n = q.len() as f64;
    hist.iter()
        .filter(|&&count| count > 0)
        .map(|&count| {
            let p = count as f64 / n;
            p * (1.0 / p).log2()
        })
        .sum()
}

/// Edge map of the ground-truth object, quantized: the reference for PSNR.
pub fn reference_edge(ground_truth: &Image2D, k: &EdgeKernel) -> Image2D {
    quantize_8bit(&apply_edge_operator(ground_truth, k))
}
