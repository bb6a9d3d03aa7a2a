//! Run configuration: `key = value` text files, every key overridable from
//! the command line.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ecam_core::edge::{EdgeKernel, InverseSpec};
use ecam_core::sim::{NoiseSpec, PsfParams, ShutterTimeline};
use ecam_core::solver::SolveConfig;
use ecam_core::GridSpec;
use sha2::{Digest, Sha256};

use crate::error::{PipelineError, Result};
use crate::shapes::Shape;

/// Built-in shape or a raster file (DECR or PGM).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum ObjectSource {
    Shape(Shape),
    File(PathBuf),
}

impl ObjectSource {
    /// Identifier used in reports and output file names.
    pub fn id(&self) -> String {
        match self {
            ObjectSource::Shape(s) => s.name().to_string(),
            ObjectSource::File(p) => p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| p.display().to_string()),
        }
    }
}

impl FromStr for ObjectSource {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let s = s.trim();
        if s.is_empty() {
            return Err("empty object name".into());
        }
        Ok(match s.parse::<Shape>() {
            Ok(shape) => ObjectSource::Shape(shape),
            Err(_) => ObjectSource::File(PathBuf::from(s)),
        })
    }
}

impl fmt::Display for ObjectSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ObjectSource::Shape(s) => f.write_str(s.name()),
            ObjectSource::File(p) => write!(f, "{}", p.display()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub rows: usize,
    pub cols: usize,
    /// 0 selects twice the working size.
    pub pad_rows: usize,
    pub pad_cols: usize,
    pub seed: u64,

    pub grain_sigma: f64,
    pub density: f64,
    pub psf_file: Option<PathBuf>,

    pub object: ObjectSource,
    pub objects: Vec<ObjectSource>,
    pub object_scale: f64,

    pub rate: f64,
    pub rates: Vec<f64>,
    pub noise_sigma: f64,

    pub tau: Option<f64>,
    pub tau_fraction: f64,
    pub max_iters: usize,
    pub rel_tol: f64,
    pub twist_alpha: f64,
    pub twist_beta: Option<f64>,
    pub nonneg: bool,
    pub edge_nonneg: bool,
    pub tv_inner_iters: usize,

    pub epsilon: f64,
    pub kernel: EdgeKernel,

    pub frames: usize,
    /// `None` spaces frame bands 8.5 ms apart.
    pub line_time: Option<f64>,
    pub exposure_time: f64,
    pub velocity_x: f64,
    pub velocity_y: f64,
    pub rolling_object: ObjectSource,
    pub rolling_scale: f64,

    pub out_dir: PathBuf,
    pub measurement: Option<PathBuf>,
    pub mask: Option<PathBuf>,
}

/// Every recognised key, in canonical order.
pub const KEYS: &[&str] = &[
    "rows",
    "cols",
    "pad_rows",
    "pad_cols",
    "seed",
    "grain_sigma",
    "density",
    "psf_file",
    "object",
    "objects",
    "object_scale",
    "rate",
    "rates",
    "noise_sigma",
    "tau",
    "tau_fraction",
    "max_iters",
    "rel_tol",
    "twist_alpha",
    "twist_beta",
    "nonneg",
    "edge_nonneg",
    "tv_inner_iters",
    "epsilon",
    "kernel",
    "frames",
    "line_time",
    "exposure_time",
    "velocity_x",
    "velocity_y",
    "rolling_object",
    "rolling_scale",
    "out_dir",
    "measurement",
    "mask",
];

/// Frame spacing used when `line_time` is left on auto.
pub const DEFAULT_FRAME_SPACING_MS: f64 = 8.5;

impl Default for RunConfig {
    fn default() -> Self {
        let solve = SolveConfig::default();
        Self {
            rows: 64,
            cols: 64,
            pad_rows: 0,
            pad_cols: 0,
            seed: 1,
            grain_sigma: 1.0,
            density: 0.1,
            psf_file: None,
            object: ObjectSource::Shape(Shape::LetterT),
            objects: [Shape::LetterT, Shape::ThreeStripes, Shape::UpArrow, Shape::UTurnArrow]
                .into_iter()
                .map(ObjectSource::Shape)
                .collect(),
            object_scale: 0.6,
            rate: 0.9,
            rates: vec![0.2, 0.3, 0.5, 0.7, 0.9],
            noise_sigma: 0.0,
            tau: solve.tau,
            tau_fraction: solve.tau_fraction,
            max_iters: solve.max_iters,
            rel_tol: solve.rel_tol,
            twist_alpha: solve.twist_alpha,
            twist_beta: solve.twist_beta,
            nonneg: solve.nonneg,
            edge_nonneg: false,
            tv_inner_iters: solve.tv_inner_iters,
            epsilon: InverseSpec::default().epsilon,
            kernel: EdgeKernel::default(),
            frames: 8,
            line_time: None,
            exposure_time: 4.0,
            velocity_x: 0.4,
            velocity_y: 0.0,
            rolling_object: ObjectSource::Shape(Shape::Car),
            rolling_scale: 0.35,
            out_dir: PathBuf::from("out"),
            measurement: None,
            mask: None,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| PipelineError::Config(format!("invalid value `{value}` for `{key}`")))
}

fn parse_auto<T: FromStr>(key: &str, value: &str) -> Result<Option<T>> {
    if value.trim() == "auto" {
        Ok(None)
    } else {
        parse_value(key, value).map(Some)
    }
}

fn parse_path(value: &str) -> Option<PathBuf> {
    let v = value.trim();
    (!v.is_empty() && v != "none").then(|| PathBuf::from(v))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_value(key, s))
        .collect()
}

fn show_auto<T: fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "auto".to_string(), T::to_string)
}

fn show_path(v: &Option<PathBuf>) -> String {
    v.as_ref().map_or_else(|| "none".to_string(), |p| p.display().to_string())
}

fn show_list<T: fmt::Display>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Defaults overlaid with a `key = value` file.
    pub fn from_file(path: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_file(path)?;
        Ok(cfg)
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        self.apply_text(&text)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                PipelineError::Config(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            self.set(key.trim(), value.trim())
                .map_err(|e| PipelineError::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(())
    }

    /// Set one key; dashes in `key` are read as underscores.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().trim_start_matches("--").replace('-', "_");
        match key.as_str() {
            "rows" => self.rows = parse_value(&key, value)?,
            "cols" => self.cols = parse_value(&key, value)?,
            "pad_rows" => self.pad_rows = parse_value(&key, value)?,
            "pad_cols" => self.pad_cols = parse_value(&key, value)?,
            "seed" => self.seed = parse_value(&key, value)?,
            "grain_sigma" => self.grain_sigma = parse_value(&key, value)?,
            "density" => self.density = parse_value(&key, value)?,
            "psf_file" => self.psf_file = parse_path(value),
            "object" => self.object = parse_value(&key, value)?,
            "objects" => self.objects = parse_list(&key, value)?,
            "object_scale" => self.object_scale = parse_value(&key, value)?,
            "rate" => self.rate = parse_value(&key, value)?,
            "rates" => self.rates = parse_list(&key, value)?,
            "noise_sigma" => self.noise_sigma = parse_value(&key, value)?,
            "tau" => self.tau = parse_auto(&key, value)?,
            "tau_fraction" => self.tau_fraction = parse_value(&key, value)?,
            "max_iters" => self.max_iters = parse_value(&key, value)?,
            "rel_tol" => self.rel_tol = parse_value(&key, value)?,
            "twist_alpha" => self.twist_alpha = parse_value(&key, value)?,
            "twist_beta" => self.twist_beta = parse_auto(&key, value)?,
            "nonneg" => self.nonneg = parse_value(&key, value)?,
            "edge_nonneg" => self.edge_nonneg = parse_value(&key, value)?,
            "tv_inner_iters" => self.tv_inner_iters = parse_value(&key, value)?,
            "epsilon" => self.epsilon = parse_value(&key, value)?,
            "kernel" => {
                self.kernel = value
                    .parse()
                    .map_err(|e: ecam_core::Error| PipelineError::Config(e.to_string()))?
            }
            "frames" => self.frames = parse_value(&key, value)?,
            "line_time" => self.line_time = parse_auto(&key, value)?,
            "exposure_time" => self.exposure_time = parse_value(&key, value)?,
            "velocity_x" => self.velocity_x = parse_value(&key, value)?,
            "velocity_y" => self.velocity_y = parse_value(&key, value)?,
            "rolling_object" => self.rolling_object = parse_value(&key, value)?,
            "rolling_scale" => self.rolling_scale = parse_value(&key, value)?,
            "out_dir" => {
                self.out_dir = parse_path(value)
                    .ok_or_else(|| PipelineError::Config("`out_dir` must not be empty".into()))?
            }
            "measurement" => self.measurement = parse_path(value),
            "mask" => self.mask = parse_path(value),
            other => return Err(PipelineError::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Canonical `(key, value)` listing in [`KEYS`] order.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        KEYS.iter()
            .map(|&key| {
                let value = match key {
                    "rows" => self.rows.to_string(),
                    "cols" => self.cols.to_string(),
                    "pad_rows" => self.pad_rows.to_string(),
                    "pad_cols" => self.pad_cols.to_string(),
                    "seed" => self.seed.to_string(),
                    "grain_sigma" => self.grain_sigma.to_string(),
                    "density" => self.density.to_string(),
                    "psf_file" => show_path(&self.psf_file),
                    "object" => self.object.to_string(),
                    "objects" => show_list(&self.objects),
                    "object_scale" => self.object_scale.to_string(),
                    "rate" => self.rate.to_string(),
                    "rates" => show_list(&self.rates),
                    "noise_sigma" => self.noise_sigma.to_string(),
                    "tau" => show_auto(&self.tau),
                    "tau_fraction" => self.tau_fraction.to_string(),
                    "max_iters" => self.max_iters.to_string(),
                    "rel_tol" => self.rel_tol.to_string(),
                    "twist_alpha" => self.twist_alpha.to_string(),
                    "twist_beta" => show_auto(&self.twist_beta),
                    "nonneg" => self.nonneg.to_string(),
                    "edge_nonneg" => self.edge_nonneg.to_string(),
                    "tv_inner_iters" => self.tv_inner_iters.to_string(),
                    "epsilon" => self.epsilon.to_string(),
                    "kernel" => self.kernel.to_string(),
                    "frames" => self.frames.to_string(),
                    "line_time" => show_auto(&self.line_time),
                    "exposure_time" => self.exposure_time.to_string(),
                    "velocity_x" => self.velocity_x.to_string(),
                    "velocity_y" => self.velocity_y.to_string(),
                    "rolling_object" => self.rolling_object.to_string(),
                    "rolling_scale" => self.rolling_scale.to_string(),
                    "out_dir" => self.out_dir.display().to_string(),
                    "measurement" => show_path(&self.measurement),
                    "mask" => show_path(&self.mask),
                    _ => unreachable!("key table out of sync"),
                };
                (key, value)
            })
            .collect()
    }

    pub fn to_text(&self) -> String {
        self.to_pairs()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// SHA-256 of the canonical listing, excluding `out_dir`.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        for (k, v) in self.to_pairs() {
            if k != "out_dir" {
                hasher.update(format!("{k}={v}\n").as_bytes());
            }
        }
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(PipelineError::Config(msg));
        if self.rows == 0 || self.cols == 0 {
            return bad("rows and cols must be positive".into());
        }
        self.grid()?;
        for &rate in self.rates.iter().chain(std::iter::once(&self.rate)) {
            if !(rate > 0.0 && rate <= 1.0) {
                return bad(format!("sampling rate {rate} outside (0, 1]"));
            }
        }
        if !(self.object_scale > 0.0 && self.object_scale <= 1.0) {
            return bad("object_scale must lie in (0, 1]".into());
        }
        if !(self.rolling_scale > 0.0 && self.rolling_scale <= 1.0) {
            return bad("rolling_scale must lie in (0, 1]".into());
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad("noise_sigma must be >= 0".into());
        }
        self.psf_params()
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        self.solve_config(self.nonneg)
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        self.inverse_spec()?;
        let files = self
            .objects
            .iter()
            .chain([&self.object, &self.rolling_object])
            .filter_map(|o| match o {
                ObjectSource::File(p) => Some(p.clone()),
                ObjectSource::Shape(_) => None,
            })
            .chain(self.psf_file.clone());
        for path in files {
            if !path.exists() {
                return bad(format!("file `{}` does not exist", path.display()));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<GridSpec> {
        let pr = if self.pad_rows == 0 { 2 * self.rows } else { self.pad_rows };
        let pc = if self.pad_cols == 0 { 2 * self.cols } else { self.pad_cols };
        GridSpec::with_padding(self.rows, self.cols, pr, pc).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn psf_params(&self) -> PsfParams {
        let grid = self.grid().unwrap_or(GridSpec {
            rows: self.rows,
            cols: self.cols,
            pad_rows: self.rows,
            pad_cols: self.cols,
        });
        PsfParams {
            seed: crate::pipeline::derive_seed(self.seed, &["psf"]),
            grain_sigma: self.grain_sigma,
            density: self.density,
            grid,
        }
    }

    pub fn solve_config(&self, nonneg: bool) -> SolveConfig {
        SolveConfig {
            tau: self.tau,
            tau_fraction: self.tau_fraction,
            max_iters: self.max_iters,
            rel_tol: self.rel_tol,
            twist_alpha: self.twist_alpha,
            twist_beta: self.twist_beta,
            nonneg,
            tv_inner_iters: self.tv_inner_iters,
        }
    }

    pub fn inverse_spec(&self) -> Result<InverseSpec> {
        InverseSpec::new(self.epsilon).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn noise(&self, seed: u64) -> NoiseSpec {
        if self.noise_sigma > 0.0 {
            NoiseSpec::gaussian(self.noise_sigma, seed)
        } else {
            NoiseSpec::none()
        }
    }

    pub fn timeline(&self) -> Result<ShutterTimeline> {
        let grid = self.grid()?;
        let band = (grid.pad_rows / self.frames.max(1)).max(1);
        let line_time = self
            .line_time
            .unwrap_or(DEFAULT_FRAME_SPACING_MS / band as f64);
        ShutterTimeline::new(grid.pad_rows, line_time, self.exposure_time, self.frames)
            .map_err(|e| PipelineError::Config(e.to_string()))
    }
}
