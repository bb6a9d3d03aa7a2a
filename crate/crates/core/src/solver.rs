//! TV-regularized least squares via two-step iterative shrinkage/thresholding.
//!
//! Minimizes `‖S(y - P ⋆ x)‖² + τ TV(x)`, optionally subject to `x ≥ 0`, where
//! `TV` is the anisotropic periodic total variation. The same solver serves the
//! object path (unmodified PSF) and the edge path (modified PSF).

use crate::edge::{modified_psf, EdgeKernel, InverseSpec};
use crate::error::{Error, Result};
use crate::imaging::{convolve_spectrum, flip_both_axes, FrequencyField, Image2D, Mask};
use crate::sim::ForwardModel;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveConfig {
    /// Fixed regularization weight; `None` selects
    /// `tau_fraction * max|Aᵀy| / (sampled fraction)`.
    pub tau: Option<f64>,
    pub tau_fraction: f64,
    pub max_iters: usize,
    pub rel_tol: f64,
    pub twist_alpha: f64,
    /// `None` derives β from α, see [`SolveConfig::beta`].
    pub twist_beta: Option<f64>,
    pub nonneg: bool,
    pub tv_inner_iters: usize,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            tau: None,
            tau_fraction: 0.002,
            max_iters: 200,
            rel_tol: 1e-4,
            twist_alpha: 1.9,
            twist_beta: None,
            nonneg: true,
            tv_inner_iters: 10,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(tau) = self.tau {
            if !(tau > 0.0 && tau.is_finite()) {
                return Err(Error::param("tau", format!("must be > 0, got {tau}")));
            }
        }
        if !(self.tau_fraction > 0.0 && self.tau_fraction.is_finite()) {
            return Err(Error::param("tau_fraction", "must be > 0"));
        }
        if self.max_iters == 0 {
            return Err(Error::param("max_iters", "must be >= 1"));
        }
        if !(self.rel_tol > 0.0 && self.rel_tol < 1.0) {
            return Err(Error::param("rel_tol", format!("must lie in (0, 1), got {}", self.rel_tol)));
        }
        if !(self.twist_alpha > 0.0 && self.twist_alpha < 2.0) {
            return Err(Error::param("twist_alpha", "must lie in (0, 2)"));
        }
        if let Some(beta) = self.twist_beta {
            if !(beta > 0.0 && beta.is_finite()) {
                return Err(Error::param("twist_beta", "must be > 0"));
            }
        }
        if self.tv_inner_iters == 0 {
            return Err(Error::param("tv_inner_iters", "must be >= 1"));
        }
        Ok(())
    }

    /// Extrapolation weight β. With the operator scaled to unit norm the
    /// spectrum of `AᵀA` is taken as `[λ₁, 1]`; α fixes
    /// `ρ = (1 - √κ) / (1 + √κ)` through `α = 1 + ρ²`, and `β = 2α / (1 + λ₁)`.
    pub fn beta(&self) -> f64 {
        if let Some(beta) = self.twist_beta {
            return beta;
        }
        let rho = (self.twist_alpha - 1.0).max(0.0).sqrt();
        let sqrt_kappa = (1.0 - rho) / (1.0 + rho);
        let lambda_min = sqrt_kappa * sqrt_kappa;
        2.0 * self.twist_alpha / (1.0 + lambda_min)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub estimate: Image2D,
    /// Objective at the starting point followed by one entry per accepted step.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Regularization weight actually used.
    pub tau: f64,
}

/// `x ↦ S (k ⋆ x)` together with its adjoint.
#[derive(Debug, Clone)]
pub struct MaskedConvolution {
    forward: FrequencyField,
    adjoint: FrequencyField,
    mask: Mask,
    lipschitz: f64,
}

impl MaskedConvolution {
    pub fn new(kernel: &Image2D, mask: Mask) -> Result<Self> {
        if kernel.shape() != mask.shape() {
            return Err(Error::shape(kernel.shape(), mask.shape()));
        }
        let forward = FrequencyField::forward(kernel);
        let peak = forward.max_norm();
        if peak == 0.0 {
            return Err(Error::ZeroOperator("PSF is identically zero"));
        }
        let adjoint = FrequencyField::forward(&flip_both_axes(kernel));
        Ok(Self {
            forward,
            adjoint,
            mask,
            lipschitz: peak * peak,
        })
    }

    pub fn from_model(model: &ForwardModel) -> Result<Self> {
        Self::new(model.psf(), model.mask().clone())
    }

    pub fn mask(&self) -> &Mask {
        &self.mask
    }

    pub fn shape(&self) -> (usize, usize) {
        self.mask.shape()
    }

    /// Upper bound on `‖A‖²`: the squared peak of the kernel spectrum.
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn apply(&self, x: &Image2D) -> Result<Image2D> {
        let mut out = convolve_spectrum(x, &self.forward)?;
        self.mask.apply_in_place(&mut out);
        Ok(out)
    }

    pub fn adjoint(&self, y: &Image2D) -> Result<Image2D> {
        let masked = self.mask.apply(y)?;
        convolve_spectrum(&masked, &self.adjoint)
    }
}

/// Anisotropic total variation with periodic forward differences.
pub fn tv_norm(x: &Image2D) -> f64 {
    let (rows, cols) = x.shape();
    let mut acc = 0.0;
    for r in 0..rows {
        let down = (r + 1) % rows;
        for c in 0..cols {
            let right = (c + 1) % cols;
            let v = x[(r, c)];
            acc += (x[(r, right)] - v).abs() + (x[(down, c)] - v).abs();
        }
    }
    acc
}

/// `‖S(y - A x)‖² + τ TV(x)`.
pub fn objective(x: &Image2D, y: &Image2D, op: &MaskedConvolution, tau: f64) -> Result<f64> {
    let residual = op.mask().apply(&y.sub(&op.apply(x)?)?)?;
    Ok(residual.norm_sq() + tau * tv_norm(x))
}

/// Gradient of the data term, `2 Aᵀ(A x - S y)`.
pub fn data_gradient(x: &Image2D, y: &Image2D, op: &MaskedConvolution) -> Result<Image2D> {
    let residual = op.apply(x)?.sub(&op.mask().apply(y)?)?;
    Ok(op.adjoint(&residual)?.scale(2.0))
}

/// Approximate `argmin_z ½‖z - x‖² + weight·TV(z)` by a fixed number of
/// accelerated projected-gradient steps on the dual.
pub fn tv_prox(x: &Image2D, weight: f64, inner_iters: usize) -> Image2D {
    TvProx::new(x.rows(), x.cols(), false).apply(x, weight, inner_iters)
}

/// Dual state for the TV proximal map, reusable across calls as a warm start.
#[derive(Debug, Clone)]
struct TvProx {
    rows: usize,
    cols: usize,
    nonneg: bool,
    // Dual variables for the column and row differences, each in [-1, 1].
    px: Vec<f64>,
    py: Vec<f64>,
}

impl TvProx {
    fn new(rows: usize, cols: usize, nonneg: bool) -> Self {
        Self {
            rows,
            cols,
            nonneg,
            px: vec![0.0; rows * cols],
            py: vec![0.0; rows * cols],
        }
    }

    fn project(&self, v: f64) -> f64 {
        if self.nonneg {
            v.max(0.0)
        } else {
            v
        }
    }

    /// `z = P_C(x - w Dᵀp)`.
    fn primal(&self, x: &[f64], w: f64, px: &[f64], py: &[f64], z: &mut [f64]) {
        let (rows, cols) = (self.rows, self.cols);
        for r in 0..rows {
            let up = (r + rows - 1) % rows;
            for c in 0..cols {
                let left = (c + cols - 1) % cols;
                let i = r * cols + c;
                let dt = px[r * cols + left] - px[i] + py[up * cols + c] - py[i];
                z[i] = self.project(x[i] - w * dt);
            }
        }
    }

    fn apply(&mut self, x: &Image2D, weight: f64, inner_iters: usize) -> Image2D {
        debug_assert_eq!(x.shape(), (self.rows, self.cols));
        if weight <= 0.0 {
            return x.map(|v| self.project(v));
        }
        let (rows, cols) = (self.rows, self.cols);
        let n = rows * cols;
        let step = 1.0 / (8.0 * weight);
        let mut z = vec![0.0; n];
        // FGP: (qx, qy) is the extrapolated dual point.
        let mut qx = self.px.clone();
        let mut qy = self.py.clone();
        let mut t = 1.0f64;
        for _ in 0..inner_iters {
            self.primal(x.data(), weight, &qx, &qy, &mut z);
            let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
            let momentum = (t - 1.0) / t_next;
            for r in 0..rows {
                let down = (r + 1) % rows;
                for c in 0..cols {
                    let right = (c + 1) % cols;
                    let i = r * cols + c;
                    let nx = (qx[i] + step * (z[r * cols + right] - z[i])).clamp(-1.0, 1.0);
                    let ny = (qy[i] + step * (z[down * cols + c] - z[i])).clamp(-1.0, 1.0);
                    qx[i] = nx + momentum * (nx - self.px[i]);
                    qy[i] = ny + momentum * (ny - self.py[i]);
                    self.px[i] = nx;
                    self.py[i] = ny;
                }
            }
            t = t_next;
        }
        let (px, py) = (self.px.clone(), self.py.clone());
        self.primal(x.data(), weight, &px, &py, &mut z);
        Image2D::new(rows, cols, z).expect("prox output has the input shape")
    }
}

struct Problem<'a> {
    y: Image2D,
    op: &'a MaskedConvolution,
    tau: f64,
}

impl Problem<'_> {
    fn objective(&self, x: &Image2D, iteration: usize) -> Result<f64> {
        let f = objective(x, &self.y, self.op, self.tau)?;
        if !f.is_finite() {
            return Err(Error::Diverged { iteration });
        }
        Ok(f)
    }
}

/// Two-step IST with a monotone safeguard.
///
/// `x_{k+1} = (1-α) x_{k-1} + (α-β) x_k + β Γ(x_k)` with
/// `Γ(x) = prox_{τ/(2L)·TV}(x + Aᵀ(y - A x) / L)`, `L = ‖A‖²`. A step that
/// raises the objective is replaced by the plain shrinkage step `Γ(x_k)`;
/// if that also fails to descend the iteration stops at `x_k`.
pub fn twist_reconstruct(y: &Image2D, op: &MaskedConvolution, config: &SolveConfig) -> Result<SolveResult> {
    config.validate()?;
    if y.shape() != op.shape() {
        return Err(Error::shape(y.shape(), op.shape()));
    }
    // Unsampled pixels never enter the solve.
    let y = op.mask().apply(y)?;
    let tau = match config.tau {
        Some(tau) => tau,
        None => {
            let mask = op.mask();
            let sampled = mask.count() as f64 / (mask.rows() * mask.cols()) as f64;
            let scale = op.adjoint(&y)?.max_abs() / sampled.max(f64::MIN_POSITIVE);
            if scale > 0.0 {
                config.tau_fraction * scale
            } else {
                config.tau_fraction
            }
        }
    };
    let problem = Problem { y, op, tau };
    let (rows, cols) = op.shape();
    let lipschitz = op.lipschitz();
    let prox_weight = tau / (2.0 * lipschitz);
    let mut prox = TvProx::new(rows, cols, config.nonneg);
    let alpha = config.twist_alpha;
    let beta = config.beta();

    let mut shrink = |x: &Image2D| -> Result<Image2D> {
        let residual = problem.y.sub(&op.apply(x)?)?;
        let step = x.add(&op.adjoint(&residual)?.scale(1.0 / lipschitz))?;
        Ok(prox.apply(&step, prox_weight, config.tv_inner_iters))
    };

    let mut x_prev = Image2D::zeros(rows, cols);
    let f_zero = problem.objective(&x_prev, 0)?;
    let mut trace = vec![f_zero];

    let first = shrink(&x_prev)?;
    let f_first = problem.objective(&first, 1)?;
    if f_first > f_zero {
        return Ok(SolveResult {
            estimate: x_prev,
            objective_trace: trace,
            iterations: 0,
            converged: true,
            tau,
        });
    }
    trace.push(f_first);
    let mut x = first;
    let mut f = f_first;
    let mut iterations = 1;
    let mut converged = relative_change(f_zero, f) < config.rel_tol;

    while !converged && iterations < config.max_iters {
        let k = iterations + 1;
        let gamma = shrink(&x)?;
        let mut candidate = x_prev
            .scale(1.0 - alpha)
            .add(&x.scale(alpha - beta))?
            .add(&gamma.scale(beta))?;
        if config.nonneg {
            candidate = candidate.map(|v| v.max(0.0));
        }
        let mut f_candidate = problem.objective(&candidate, k)?;
        if f_candidate > f {
            candidate = gamma;
            f_candidate = problem.objective(&candidate, k)?;
            if f_candidate > f {
                converged = true;
                break;
            }
        }
        trace.push(f_candidate);
        iterations += 1;
        converged = relative_change(f, f_candidate) < config.rel_tol;
        x_prev = std::mem::replace(&mut x, candidate);
        f = f_candidate;
    }

    Ok(SolveResult {
        estimate: x,
        objective_trace: trace,
        iterations,
        converged,
        tau,
    })
}

fn relative_change(old: f64, new: f64) -> f64 {
    if old == 0.0 {
        if new == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (old - new).abs() / old.abs()
    }
}

/// Object-domain reconstruction with the unmodified PSF.
pub fn reconstruct_object(y: &Image2D, model: &ForwardModel, config: &SolveConfig) -> Result<SolveResult> {
    let op = MaskedConvolution::from_model(model)?;
    twist_reconstruct(y, &op, config)
}

/// Direct edge-image reconstruction against the modified PSF.
pub fn reconstruct_edges(
    y: &Image2D,
    model: &ForwardModel,
    kernel: &EdgeKernel,
    inverse: &InverseSpec,
    config: &SolveConfig,
) -> Result<SolveResult> {
    let psf_mod = modified_psf(model.psf(), kernel, inverse)?;
    let op = MaskedConvolution::new(&psf_mod, model.mask().clone())?;
    let mask = model.mask();
    let n = mask.count().max(1) as f64;
    let mean = y.data().iter().zip(mask.bits()).filter(|(_, &b)| b).map(|(v, _)| v).sum::<f64>() / n;
    twist_reconstruct(&y.map(|v| v - mean), &op, config)
}
