//! Scenario drivers behind the CLI subcommands.

use std::fs;
use std::path::{Path, PathBuf};

use ecam_core::edge::apply_edge_operator;
use ecam_core::imaging::{crop_center, pad_center};
use ecam_core::metrics::{information_entropy, mse, psnr, quantize_8bit};
use ecam_core::sim::{
    make_sampling_mask, normalize_psf, render_frame, simulate_measurement, simulate_rolling_shutter,
    synthesize_psf, ForwardModel, MotionModel,
};
use ecam_core::solver::{reconstruct_edges, reconstruct_object, SolveResult};
use ecam_core::{GridSpec, Image2D, Mask};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::config::{ObjectSource, RunConfig};
use crate::error::{PipelineError, Result};
use crate::raster::{read_image, read_raster, write_pgm, write_raster};
use crate::report::{append_csv, fmt17, MetricsRecord, MetricsReport, Method};

/// Stable 64-bit seed from a global seed and run coordinates.
pub fn derive_seed(global: u64, parts: &[&str]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(global.to_le_bytes());
    for part in parts {
        hasher.update([0u8]);
        hasher.update(part.as_bytes());
    }
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

fn rate_key(rate: f64) -> String {
    format!("{rate:.6}")
}

fn ensure_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| PipelineError::io(path, e))
}

/// Object on the working grid. Files must match the working size; PGM
/// levels are scaled to `[0, 1]`.
pub fn load_object(src: &ObjectSource, rows: usize, cols: usize, scale: f64) -> Result<Image2D> {
    match src {
        ObjectSource::Shape(shape) => Ok(shape.rasterize(rows, cols, scale)),
        ObjectSource::File(path) => {
            let img = read_image(path)?;
            if img.shape() != (rows, cols) {
                return Err(PipelineError::Config(format!(
                    "object `{}` is {}x{}, working grid is {rows}x{cols}",
                    path.display(),
                    img.rows(),
                    img.cols()
                )));
            }
            if img.min() < 0.0 {
                return Err(PipelineError::Config(format!(
                    "object `{}` has negative intensities",
                    path.display()
                )));
            }
            let is_pgm = fs::read(path)
                .map(|b| b.starts_with(b"P5"))
                .unwrap_or(false);
            Ok(if is_pgm { img.scale(1.0 / 255.0) } else { img })
        }
    }
}

/// Calibrated PSF from `psf_file` (normalized to unit sum) or a synthetic one.
pub fn build_psf(cfg: &RunConfig) -> Result<Image2D> {
    let grid = cfg.grid()?;
    match &cfg.psf_file {
        Some(path) => {
            let psf = read_image(path)?;
            if psf.shape() != grid.padded_shape() {
                return Err(PipelineError::Config(format!(
                    "PSF `{}` is {}x{}, padded grid is {}x{}",
                    path.display(),
                    psf.rows(),
                    psf.cols(),
                    grid.pad_rows,
                    grid.pad_cols
                )));
            }
            Ok(normalize_psf(&psf)?)
        }
        None => Ok(synthesize_psf(&cfg.psf_params())?),
    }
}

/// A simulated static acquisition.
#[derive(Debug, Clone)]
pub struct Scene {
    pub object_id: String,
    pub rate: f64,
    pub grid: GridSpec,
    /// Ground truth on the working grid.
    pub object: Image2D,
    pub model: ForwardModel,
    pub measurement: Image2D,
    pub mask_seed: u64,
}

pub fn simulate_scene(cfg: &RunConfig, src: &ObjectSource, psf: &Image2D, rate: f64) -> Result<Scene> {
    let grid = cfg.grid()?;
    let object_id = src.id();
    let object = load_object(src, grid.rows, grid.cols, cfg.object_scale)?;
    let mask_seed = derive_seed(cfg.seed, &["mask", &object_id]);
    let mask = make_sampling_mask(&grid, rate, mask_seed)?;
    let model = ForwardModel::new(psf.clone(), mask, grid)?;
    let noise = cfg.noise(derive_seed(cfg.seed, &["noise", &object_id, &rate_key(rate)]));
    let measurement = simulate_measurement(&pad_center(&object, &grid)?, &model, &noise)?;
    Ok(Scene {
        object_id,
        rate,
        grid,
        object,
        model,
        measurement,
        mask_seed,
    })
}

/// Edge map of the ground truth on the working grid, as scored.
pub fn reference_edge_map(cfg: &RunConfig, object: &Image2D, grid: &GridSpec) -> Result<Image2D> {
    let edge = apply_edge_operator(&pad_center(object, grid)?, &cfg.kernel);
    let edge = crop_center(&edge, grid.rows, grid.cols)?;
    Ok(quantize_8bit(&score_view(cfg, &edge)))
}

/// Signed maps are scored as-is; with `edge_nonneg` both sides are clamped
/// at zero so they compare like for like.
fn score_view(cfg: &RunConfig, edge: &Image2D) -> Image2D {
    if cfg.edge_nonneg {
        edge.map(|v| v.max(0.0))
    } else {
        edge.clone()
    }
}

#[derive(Debug, Clone)]
pub struct EdgeOutcome {
    pub method: Method,
    /// Signed edge estimate on the working grid.
    pub edge: Image2D,
    /// 8-bit rendering used for scoring and export.
    pub quantized: Image2D,
    pub solve: SolveResult,
}

impl EdgeOutcome {
    pub fn score(&self, object_id: &str, rate: f64, reference: &Image2D) -> Result<MetricsRecord> {
        Ok(MetricsRecord {
            object_id: object_id.to_string(),
            method: self.method,
            sampling_rate: rate,
            psnr_db: psnr(&self.quantized, reference)?,
            ie_bits: information_entropy(&self.quantized, 256),
            mse: mse(&self.quantized, reference)?,
        })
    }
}

/// Edge image straight from the measurement through the modified model.
pub fn run_ecam(cfg: &RunConfig, y: &Image2D, model: &ForwardModel) -> Result<EdgeOutcome> {
    let grid = model.grid();
    let solve = reconstruct_edges(
        y,
        model,
        &cfg.kernel,
        &cfg.inverse_spec()?,
        &cfg.solve_config(cfg.edge_nonneg),
    )?;
    let edge = crop_center(&solve.estimate, grid.rows, grid.cols)?;
    let quantized = quantize_8bit(&score_view(cfg, &edge));
    Ok(EdgeOutcome {
        method: Method::DiffuserEcam,
        edge,
        quantized,
        solve,
    })
}

/// Object reconstruction followed by the edge stencil.
pub fn run_post(cfg: &RunConfig, y: &Image2D, model: &ForwardModel) -> Result<EdgeOutcome> {
    let grid = model.grid();
    let solve = reconstruct_object(y, model, &cfg.solve_config(cfg.nonneg))?;
    let edge = apply_edge_operator(&solve.estimate, &cfg.kernel);
    let edge = crop_center(&edge, grid.rows, grid.cols)?;
    let quantized = quantize_8bit(&score_view(cfg, &edge));
    Ok(EdgeOutcome {
        method: Method::PostProcessing,
        edge,
        quantized,
        solve,
    })
}

pub fn run_method(cfg: &RunConfig, method: Method, y: &Image2D, model: &ForwardModel) -> Result<EdgeOutcome> {
    match method {
        Method::DiffuserEcam => run_ecam(cfg, y, model),
        Method::PostProcessing => run_post(cfg, y, model),
    }
}

fn write_both(img: &Image2D, quantized: &Image2D, stem: &Path) -> Result<()> {
    write_raster(img, &stem.with_extension("decr"))?;
    write_pgm(quantized, &stem.with_extension("pgm"))
}

/// Writes `psf.decr`, `psf.pgm` and `psf.meta`.
pub fn cmd_psf(cfg: &RunConfig) -> Result<PathBuf> {
    cfg.validate()?;
    ensure_dir(&cfg.out_dir)?;
    let psf = build_psf(cfg)?;
    let path = cfg.out_dir.join("psf.decr");
    write_both(&psf, &quantize_8bit(&psf), &cfg.out_dir.join("psf"))?;
    let params = cfg.psf_params();
    let meta = format!(
        "source = {}\nseed = {}\ngrain_sigma = {}\ndensity = {}\nrows = {}\ncols = {}\nsum = {}\nconfig_digest = {}\n",
        cfg.psf_file
            .as_ref()
            .map_or_else(|| "synthetic".to_string(), |p| p.display().to_string()),
        params.seed,
        params.grain_sigma,
        params.density,
        psf.rows(),
        psf.cols(),
        fmt17(psf.sum()),
        cfg.digest()
    );
    let meta_path = cfg.out_dir.join("psf.meta");
    fs::write(&meta_path, meta).map_err(|e| PipelineError::io(&meta_path, e))?;
    Ok(path)
}

#[derive(Debug, Clone)]
pub struct SimulateOutput {
    pub scene: Scene,
    pub measurement_path: PathBuf,
    pub mask_path: PathBuf,
    pub psf_path: PathBuf,
}

/// Writes `object`, `psf`, `mask` and `measurement` rasters.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<SimulateOutput> {
    cfg.validate()?;
    ensure_dir(&cfg.out_dir)?;
    let psf = build_psf(cfg)?;
    let scene = simulate_scene(cfg, &cfg.object, &psf, cfg.rate)?;
    let dir = &cfg.out_dir;
    write_both(&scene.object, &quantize_8bit(&scene.object), &dir.join("object"))?;
    let psf_path = dir.join("psf.decr");
    write_raster(&psf, &psf_path)?;
    let mask_path = dir.join("mask.decr");
    write_raster(&scene.model.mask().to_image(), &mask_path)?;
    let measurement_path = dir.join("measurement.decr");
    write_both(&scene.measurement, &quantize_8bit(&scene.measurement), &dir.join("measurement"))?;
    Ok(SimulateOutput {
        scene,
        measurement_path,
        mask_path,
        psf_path,
    })
}

/// Measurement, mask and PSF for the edge/baseline commands: explicit files
/// when configured, otherwise the outputs of `simulate` in `out_dir`, and
/// failing that a fresh in-memory simulation.
fn acquisition(cfg: &RunConfig) -> Result<(Image2D, ForwardModel)> {
    let grid = cfg.grid()?;
    let measurement_path = cfg
        .measurement
        .clone()
        .unwrap_or_else(|| cfg.out_dir.join("measurement.decr"));
    if cfg.measurement.is_none() && !measurement_path.exists() {
        let psf = build_psf(cfg)?;
        let scene = simulate_scene(cfg, &cfg.object, &psf, cfg.rate)?;
        return Ok((scene.measurement, scene.model));
    }
    let y = read_raster(&measurement_path)?;
    let mask_path = cfg.mask.clone().unwrap_or_else(|| cfg.out_dir.join("mask.decr"));
    let mask = if mask_path.exists() {
        Mask::from_image(&read_raster(&mask_path)?)
    } else {
        Mask::full(grid.pad_rows, grid.pad_cols)
    };
    let psf = match &cfg.psf_file {
        Some(_) => build_psf(cfg)?,
        None => {
            let stored = cfg.out_dir.join("psf.decr");
            if stored.exists() {
                normalize_psf(&read_raster(&stored)?)?
            } else {
                build_psf(cfg)?
            }
        }
    };
    if y.shape() != grid.padded_shape() {
        return Err(PipelineError::Config(format!(
            "measurement is {}x{}, padded grid is {}x{}",
            y.rows(),
            y.cols(),
            grid.pad_rows,
            grid.pad_cols
        )));
    }
    Ok((y, ForwardModel::new(psf, mask, grid)?))
}

fn single_method(cfg: &RunConfig, method: Method) -> Result<(EdgeOutcome, MetricsRecord)> {
    cfg.validate()?;
    ensure_dir(&cfg.out_dir)?;
    let (y, model) = acquisition(cfg)?;
    let grid = *model.grid();
    let outcome = run_method(cfg, method, &y, &model)?;
    let object = load_object(&cfg.object, grid.rows, grid.cols, cfg.object_scale)?;
    let reference = reference_edge_map(cfg, &object, &grid)?;
    let rate = model.mask().count() as f64 / grid.padded_pixels() as f64;
    let record = outcome.score(&cfg.object.id(), rate, &reference)?;
    write_both(&outcome.edge, &outcome.quantized, &cfg.out_dir.join(format!("edge_{method}")))?;
    append_csv(&cfg.out_dir.join("metrics.csv"), std::slice::from_ref(&record))?;
    Ok((outcome, record))
}

pub fn cmd_edge(cfg: &RunConfig) -> Result<(EdgeOutcome, MetricsRecord)> {
    single_method(cfg, Method::DiffuserEcam)
}

pub fn cmd_baseline(cfg: &RunConfig) -> Result<(EdgeOutcome, MetricsRecord)> {
    single_method(cfg, Method::PostProcessing)
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut out = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let rank = (i + j) as f64 / 2.0 + 1.0;
            for &k in &idx[i..=j] {
                out[k] = rank;
            }
            i = j + 1;
        }
        out
    }
    assert_eq!(x.len(), y.len());
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut cov = 0.0;
    let (mut vx, mut vy) = (0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        cov += (a - mx) * (b - my);
        vx += (a - mx).powi(2);
        vy += (b - my).powi(2);
    }
    if vx == 0.0 || vy == 0.0 {
        return f64::NAN;
    }
    cov / (vx * vy).sqrt()
}

#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub report: MetricsReport,
    pub csv_path: PathBuf,
    /// Fraction of (object, rate) cells where the direct edge PSNR is at
    /// least the post-processing PSNR.
    pub ecam_win_fraction: f64,
    /// Spearman correlation of PSNR with rate per (object, method).
    pub rate_correlation: Vec<(String, Method, f64)>,
}

struct Cell {
    object_id: String,
    rate: f64,
    mask_seed: u64,
    reference: Option<Image2D>,
    outcomes: Vec<(Method, std::result::Result<EdgeOutcome, String>)>,
}

fn run_cell(cfg: &RunConfig, src: &ObjectSource, psf: &Image2D, rate: f64) -> Cell {
    let object_id = src.id();
    let scene = match simulate_scene(cfg, src, psf, rate) {
        Ok(scene) => scene,
        Err(e) => {
            let msg = e.to_string();
            return Cell {
                object_id,
                rate,
                mask_seed: 0,
                reference: None,
                outcomes: Method::BOTH.iter().map(|&m| (m, Err(msg.clone()))).collect(),
            };
        }
    };
    let reference = reference_edge_map(cfg, &scene.object, &scene.grid).ok();
    let outcomes = Method::BOTH
        .iter()
        .map(|&m| {
            let out = run_method(cfg, m, &scene.measurement, &scene.model).map_err(|e| e.to_string());
            (m, out)
        })
        .collect();
    Cell {
        object_id,
        rate,
        mask_seed: scene.mask_seed,
        reference,
        outcomes,
    }
}

/// Tile images left to right, top to bottom, with a one-pixel black gutter.
fn tile(rows_of_tiles: &[Vec<Image2D>], tile_rows: usize, tile_cols: usize) -> Image2D {
    let n_rows = rows_of_tiles.len();
    let n_cols = rows_of_tiles.iter().map(Vec::len).max().unwrap_or(1).max(1);
    let height = n_rows.max(1) * (tile_rows + 1) - 1;
    let width = n_cols * (tile_cols + 1) - 1;
    let mut out = Image2D::zeros(height.max(1), width.max(1));
    for (i, row) in rows_of_tiles.iter().enumerate() {
        for (j, img) in row.iter().enumerate() {
            for r in 0..tile_rows.min(img.rows()) {
                for c in 0..tile_cols.min(img.cols()) {
                    out[(i * (tile_rows + 1) + r, j * (tile_cols + 1) + c)] = img[(r, c)];
                }
            }
        }
    }
    out
}

/// Both methods over every (object, rate); one CSV row per run.
pub fn cmd_sweep(cfg: &RunConfig) -> Result<SweepOutput> {
    cfg.validate()?;
    if cfg.objects.is_empty() || cfg.rates.is_empty() {
        return Err(PipelineError::Config("sweep needs at least one object and one rate".into()));
    }
    let grid = cfg.grid()?;
    let runs_dir = cfg.out_dir.join("sweep");
    ensure_dir(&runs_dir)?;
    let psf = build_psf(cfg)?;

    let coords: Vec<(&ObjectSource, f64)> = cfg
        .objects
        .iter()
        .flat_map(|o| cfg.rates.iter().map(move |&r| (o, r)))
        .collect();
    let cells: Vec<Cell> = coords
        .par_iter()
        .map(|&(src, rate)| run_cell(cfg, src, &psf, rate))
        .collect();

    let mut report = MetricsReport::default();
    let meta = &mut report.metadata;
    meta.push(("global_seed".into(), cfg.seed.to_string()));
    meta.push(("psf_seed".into(), cfg.psf_params().seed.to_string()));
    meta.push(("config_digest".into(), cfg.digest()));
    meta.push(("quantization".into(), "min-max to 0..=255, round half away from zero".into()));
    meta.push(("entropy_bins".into(), "256".into()));
    meta.push((
        "edge_sign".into(),
        if cfg.edge_nonneg { "clamped at zero" } else { "signed, min-max mapped" }.into(),
    ));

    for cell in &cells {
        meta.push((
            format!("mask_seed.{}.{}", cell.object_id, rate_key(cell.rate)),
            cell.mask_seed.to_string(),
        ));
        for (method, outcome) in &cell.outcomes {
            let scored = match (outcome, &cell.reference) {
                (Ok(out), Some(reference)) => out
                    .score(&cell.object_id, cell.rate, reference)
                    .map_err(|e| e.to_string())
                    .and_then(|rec| {
                        let stem = runs_dir.join(format!("{}_{}_{}", cell.object_id, method, rate_key(cell.rate)));
                        write_both(&out.edge, &out.quantized, &stem).map_err(|e| e.to_string())?;
                        Ok(rec)
                    }),
                (Err(e), _) => Err(e.clone()),
                (Ok(_), None) => Err("reference edge map unavailable".to_string()),
            };
            let record = scored.unwrap_or_else(|e| {
                meta.push((
                    format!("error.{}.{}.{}", cell.object_id, method, rate_key(cell.rate)),
                    e,
                ));
                MetricsRecord::failed(cell.object_id.clone(), *method, cell.rate)
            });
            report.records.push(record);
        }
    }
    report.sort();

    // Per-rate image grids: one row per object, columns reference / direct / post.
    let mut rates = cfg.rates.clone();
    rates.sort_by(f64::total_cmp);
    rates.dedup();
    let blank = Image2D::zeros(grid.rows, grid.cols);
    for &rate in &rates {
        let rows: Vec<Vec<Image2D>> = cells
            .iter()
            .filter(|c| c.rate == rate)
            .map(|c| {
                let mut row = vec![c.reference.clone().unwrap_or_else(|| blank.clone())];
                for method in Method::BOTH {
                    let img = c
                        .outcomes
                        .iter()
                        .find(|(m, _)| *m == method)
                        .and_then(|(_, o)| o.as_ref().ok())
                        .map_or_else(|| blank.clone(), |o| o.quantized.clone());
                    row.push(img);
                }
                row
            })
            .collect();
        let grid_img = tile(&rows, grid.rows, grid.cols);
        write_pgm(&grid_img, &cfg.out_dir.join(format!("grid_rate_{}.pgm", rate_key(rate))))?;
    }

    // Summary statistics.
    let mut wins = 0usize;
    let mut cells_scored = 0usize;
    for cell in &cells {
        let get = |m| report.find(&cell.object_id, m, cell.rate).filter(|r| !r.is_failed());
        if let (Some(e), Some(p)) = (get(Method::DiffuserEcam), get(Method::PostProcessing)) {
            cells_scored += 1;
            if e.psnr_db >= p.psnr_db {
                wins += 1;
            }
        }
    }
    let ecam_win_fraction = if cells_scored == 0 {
        f64::NAN
    } else {
        wins as f64 / cells_scored as f64
    };
    let mut rate_correlation = Vec::new();
    let mut ids: Vec<String> = cfg.objects.iter().map(ObjectSource::id).collect();
    ids.dedup();
    for id in &ids {
        for method in Method::BOTH {
            let pts: Vec<(f64, f64)> = report
                .records
                .iter()
                .filter(|r| &r.object_id == id && r.method == method && !r.is_failed())
                .map(|r| (r.sampling_rate, r.psnr_db))
                .collect();
            let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
            let rho = if x.len() >= 2 { spearman(&x, &y) } else { f64::NAN };
            report
                .metadata
                .push((format!("spearman.{id}.{method}"), fmt17(rho)));
            rate_correlation.push((id.clone(), method, rho));
        }
    }
    report
        .metadata
        .push(("ecam_win_fraction".into(), fmt17(ecam_win_fraction)));

    let csv_path = cfg.out_dir.join("sweep.csv");
    report.write(&csv_path)?;
    Ok(SweepOutput {
        report,
        csv_path,
        ecam_win_fraction,
        rate_correlation,
    })
}

/// Centroid `(row, col)` of an edge map: absolute response, with pixels
/// below a quarter of the peak ignored.
pub fn edge_centroid(edge: &Image2D) -> Option<(f64, f64)> {
    let magnitude = edge.map(f64::abs);
    let cut = 0.25 * magnitude.max();
    magnitude.map(|v| if v >= cut { v } else { 0.0 }).centroid()
}

#[derive(Debug, Clone)]
pub struct RollingOutput {
    pub times: Vec<f64>,
    /// Signed edge estimates on the working grid, one per frame.
    pub frames: Vec<Image2D>,
    pub quantized: Vec<Image2D>,
    pub centroids: Vec<Option<(f64, f64)>>,
    /// Centroids of the ground-truth edge maps at the frame times.
    pub true_centroids: Vec<Option<(f64, f64)>>,
    pub measurement: Image2D,
}

/// Moving object centred on the grid at mid-exposure.
pub fn rolling_motion(cfg: &RunConfig) -> Result<MotionModel> {
    let grid = cfg.grid()?;
    let timeline = cfg.timeline()?;
    let t_last = timeline.frame_time(timeline.n_frames - 1);
    let base = match &cfg.rolling_object {
        ObjectSource::Shape(shape) => {
            let center = (
                grid.rows as f64 / 2.0 - cfg.velocity_y * t_last / 2.0,
                grid.cols as f64 / 2.0 - cfg.velocity_x * t_last / 2.0,
            );
            // The shape's bounding box must stay on the grid over the whole capture.
            let half = cfg.rolling_scale * grid.rows.min(grid.cols) as f64 / 2.0;
            let fits = |c: f64, n: usize| c - half >= 0.0 && c + half <= n as f64;
            let end = (center.0 + cfg.velocity_y * t_last, center.1 + cfg.velocity_x * t_last);
            for (time, (r, c)) in [(0.0, center), (t_last, end)] {
                if !(fits(r, grid.rows) && fits(c, grid.cols)) {
                    return Err(ecam_core::Error::OutOfGrid { time }.into());
                }
            }
            shape.rasterize_at(grid.rows, grid.cols, cfg.rolling_scale, center)
        }
        file => load_object(file, grid.rows, grid.cols, cfg.rolling_scale)?,
    };
    Ok(MotionModel::new(base, (cfg.velocity_x, cfg.velocity_y)))
}

/// Rolling-shutter capture of a moving object, then one edge reconstruction
/// per row band using only that band's rows. The band is the sampling
/// pattern here, so `rate` does not apply.
pub fn cmd_rolling(cfg: &RunConfig) -> Result<RollingOutput> {
    cfg.validate()?;
    let dir = cfg.out_dir.join("rolling");
    ensure_dir(&dir)?;
    let grid = cfg.grid()?;
    let timeline = cfg.timeline()?;
    let motion = rolling_motion(cfg)?;
    let psf = build_psf(cfg)?;
    let model = ForwardModel::new(psf, Mask::full(grid.pad_rows, grid.pad_cols), grid)?;
    let noise = cfg.noise(derive_seed(cfg.seed, &["noise", "rolling"]));
    let y = simulate_rolling_shutter(&motion, &model, &timeline, &noise)?;

    let times = timeline.frame_times();
    let results: Vec<Result<EdgeOutcome>> = (0..timeline.n_frames)
        .into_par_iter()
        .map(|k| {
            let band_model = model.with_mask(timeline.band_mask(k, grid.pad_cols))?;
            run_ecam(cfg, &y, &band_model).map_err(|e| match e {
                PipelineError::Numerical(source) => PipelineError::Band { band: k, source },
                other => other,
            })
        })
        .collect();

    let mut frames = Vec::with_capacity(results.len());
    let mut quantized = Vec::with_capacity(results.len());
    for (k, res) in results.into_iter().enumerate() {
        let out = res?;
        write_both(&out.edge, &out.quantized, &dir.join(format!("frame_{k:02}")))?;
        frames.push(out.edge);
        quantized.push(out.quantized);
    }
    let centroids: Vec<_> = frames.iter().map(edge_centroid).collect();
    let true_centroids = times
        .iter()
        .map(|&t| {
            let frame = render_frame(&motion, t)?;
            Ok(edge_centroid(&apply_edge_operator(&frame, &cfg.kernel)))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut csv = String::from("frame,time_ms,centroid_row,centroid_col,true_row,true_col\n");
    let show = |c: Option<(f64, f64)>| c.map_or_else(|| "nan,nan".to_string(), |(r, c)| format!("{},{}", fmt17(r), fmt17(c)));
    for k in 0..frames.len() {
        csv.push_str(&format!(
            "{k},{},{},{}\n",
            fmt17(times[k]),
            show(centroids[k]),
            show(true_centroids[k])
        ));
    }
    let traj = dir.join("trajectory.csv");
    fs::write(&traj, csv).map_err(|e| PipelineError::io(&traj, e))?;
    write_both(&y, &quantize_8bit(&y), &dir.join("measurement"))?;

    Ok(RollingOutput {
        times,
        frames,
        quantized,
        centroids,
        true_centroids,
        measurement: y,
    })
}
