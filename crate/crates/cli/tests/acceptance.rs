//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit if any fail.

use std::fs;
use std::path::Path;
use std::time::Instant;

use ecam_cli::pipeline::{cmd_rolling, cmd_sweep, rolling_motion};
use ecam_cli::{Method, RunConfig};
use ecam_core::edge::{apply_edge_operator, edge_kernel_default, kernel_frequency_response, modified_psf, InverseSpec};
use ecam_core::imaging::{circular_convolve, FrequencyField};
use ecam_core::metrics::{information_entropy, psnr};
use ecam_core::sim::{make_sampling_mask, render_frame, synthesize_psf, PsfParams};
use ecam_core::solver::{data_gradient, objective, reconstruct_edges, reconstruct_object, MaskedConvolution, SolveConfig};
use ecam_core::{GridSpec, Image2D, Mask};
use ecam_core::sim::ForwardModel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Criterion<'a> = (&'static str, Box<dyn FnOnce() -> Outcome + 'a>);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn random_image(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Image2D {
    Image2D::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

fn random_mask(rng: &mut ChaCha8Rng, rows: usize, cols: usize, rate: f64) -> Mask {
    Mask::new(rows, cols, (0..rows * cols).map(|_| rng.random::<f64>() < rate).collect()).unwrap()
}

fn direct_convolution(a: &Image2D, b: &Image2D) -> Image2D {
    let (m, n) = a.shape();
    Image2D::from_fn(m, n, |r, c| {
        let mut acc = 0.0;
        for i in 0..m {
            for j in 0..n {
                acc += a[(i, j)] * b[((r + m - i) % m, (c + n - j) % n)];
            }
        }
        acc
    })
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let (m, n) = (rng.random_range(1..=16), rng.random_range(1..=16));
        let a = random_image(&mut rng, m, n);
        let b = random_image(&mut rng, m, n);
        let fast = circular_convolve(&a, &b).unwrap();
        worst = worst.max(fast.sub(&direct_convolution(&a, &b)).unwrap().max_abs());
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-10 && secs < 5.0,
        format!("max abs error {worst:.2e} over 100 grids up to 16x16, {secs:.2} s"),
    )
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst: f64 = 0.0;
    for i in 0..50 {
        let (m, n) = (rng.random_range(4..=40), rng.random_range(4..=40));
        let kernel = if i % 2 == 0 {
            random_image(&mut rng, m, n)
        } else {
            let grid = GridSpec::with_padding(m / 2, n / 2, m, n).unwrap();
            let psf = synthesize_psf(&PsfParams {
                density: 0.5,
                ..PsfParams::new(grid, i)
            })
            .unwrap();
            modified_psf(&psf, &edge_kernel_default(), &InverseSpec::default()).unwrap()
        };
        let rate = rng.random_range(0.1..1.0);
        let op = MaskedConvolution::new(&kernel, random_mask(&mut rng, m, n, rate)).unwrap();
        let x = random_image(&mut rng, m, n);
        let y = random_image(&mut rng, m, n);
        let ax = op.apply(&x).unwrap();
        let lhs = ax.dot(&y).unwrap();
        let rhs = x.dot(&op.adjoint(&y).unwrap()).unwrap();
        worst = worst.max((lhs - rhs).abs() / (ax.norm() * y.norm()));
    }
    outcome(worst <= 1e-8, format!("worst normalized adjoint gap {worst:.2e} over 50 masked models"))
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let spec = InverseSpec::new(1e-3).unwrap();
    let kernel = edge_kernel_default();
    let grid = GridSpec::with_padding(32, 32, 64, 64).unwrap();
    let h = kernel_frequency_response(&kernel, 64, 64);
    let cutoff = 10.0 * spec.epsilon * h.max_norm();
    let mut worst: f64 = 0.0;
    for i in 0..20 {
        let raw = FrequencyField::forward(&random_image(&mut rng, 64, 64));
        let filtered = FrequencyField::new(
            64,
            64,
            raw.data()
                .iter()
                .zip(h.data())
                .map(|(&z, hz)| if hz.norm() < cutoff { z * 0.0 } else { z })
                .collect(),
        )
        .unwrap();
        let (x, _) = filtered.inverse_real();
        let psf = synthesize_psf(&PsfParams::new(grid, 1000 + i)).unwrap();
        let mask = random_mask(&mut rng, 64, 64, 0.7);
        let a = MaskedConvolution::new(&psf, mask.clone()).unwrap();
        let a_mod = MaskedConvolution::new(&modified_psf(&psf, &kernel, &spec).unwrap(), mask).unwrap();
        let ax = a.apply(&x).unwrap();
        let edge_path = a_mod.apply(&apply_edge_operator(&x, &kernel)).unwrap();
        worst = worst.max(edge_path.sub(&ax).unwrap().norm() / ax.norm());
    }
    outcome(worst <= 1e-3, format!("worst relative error {worst:.2e} over 20 band-limited 64x64 instances"))
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    // Monotone objective traces on both reconstruction paths.
    let mut solves = 0;
    let mut violations = 0;
    let mut worst_rise: f64 = 0.0;
    for i in 0..12 {
        let n = [8, 16, 32][i % 3];
        let grid = GridSpec::new(n, n).unwrap();
        let psf = synthesize_psf(&PsfParams::new(grid, 40 + i as u64)).unwrap();
        let mask = make_sampling_mask(&grid, rng.random_range(0.2..1.0), i as u64).unwrap();
        let model = ForwardModel::new(psf, mask, grid).unwrap();
        let y = model.mask().apply(&random_image(&mut rng, 2 * n, 2 * n).map(f64::abs)).unwrap();
        let cfg = SolveConfig {
            max_iters: 60,
            nonneg: i % 2 == 0,
            ..SolveConfig::default()
        };
        let results = [
            reconstruct_object(&y, &model, &cfg).unwrap(),
            reconstruct_edges(&y, &model, &edge_kernel_default(), &InverseSpec::default(), &cfg).unwrap(),
        ];
        for res in results {
            solves += 1;
            for w in res.objective_trace.windows(2) {
                if w[1] > w[0] {
                    violations += 1;
                    worst_rise = worst_rise.max(w[1] - w[0]);
                }
            }
        }
    }
    // Data-term gradient against central differences.
    let mut worst_grad: f64 = 0.0;
    for _ in 0..10 {
        let kernel = random_image(&mut rng, 8, 8);
        let op = MaskedConvolution::new(&kernel, random_mask(&mut rng, 8, 8, 0.6)).unwrap();
        let x = random_image(&mut rng, 8, 8);
        let y = random_image(&mut rng, 8, 8);
        let g = data_gradient(&x, &y, &op).unwrap();
        let h = 1e-5;
        let fd = Image2D::from_fn(8, 8, |r, c| {
            let mut plus = x.clone();
            let mut minus = x.clone();
            plus[(r, c)] += h;
            minus[(r, c)] -= h;
            (objective(&plus, &y, &op, 0.0).unwrap() - objective(&minus, &y, &op, 0.0).unwrap()) / (2.0 * h)
        });
        worst_grad = worst_grad.max(g.sub(&fd).unwrap().norm() / g.norm());
    }
    outcome(
        violations == 0 && worst_grad <= 1e-5,
        format!(
            "{solves} solves, {violations} objective increases (largest {worst_rise:.2e}); gradient relative error {worst_grad:.2e} on 8x8"
        ),
    )
}

fn criterion_5(dir: &Path) -> Outcome {
    let cfg = RunConfig {
        out_dir: dir.to_path_buf(),
        ..RunConfig::default()
    };
    let start = Instant::now();
    let out = match cmd_sweep(&cfg) {
        Ok(out) => out,
        Err(e) => return outcome(false, format!("sweep failed: {e}")),
    };
    let secs = start.elapsed().as_secs_f64();
    let failed = out.report.records.iter().filter(|r| r.is_failed()).count();
    let trend_ok = out.rate_correlation.iter().all(|(_, _, rho)| *rho > 0.8);
    let weakest = out
        .rate_correlation
        .iter()
        .map(|(_, _, rho)| *rho)
        .fold(f64::INFINITY, f64::min);
    let mean = |m: Method| {
        let v: Vec<f64> = out.report.records.iter().filter(|r| r.method == m).map(|r| r.psnr_db).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let win_ok = out.ecam_win_fraction >= 0.8;
    outcome(
        failed == 0 && win_ok && trend_ok && secs <= 600.0,
        format!(
            "(a) direct >= post on {:.0}% of cells [{}]; (b) min Spearman {weakest:.2} [{}]; mean PSNR direct {:.2} dB, post {:.2} dB; {failed} failed runs; {secs:.1} s",
            100.0 * out.ecam_win_fraction,
            if win_ok { "pass" } else { "fail" },
            if trend_ok { "pass" } else { "fail" },
            mean(Method::DiffuserEcam),
            mean(Method::PostProcessing),
        ),
    )
}

fn criterion_6(dir: &Path) -> Outcome {
    let start = Instant::now();
    let cfg = RunConfig {
        out_dir: dir.join("moving"),
        ..RunConfig::default()
    };
    let moving = match cmd_rolling(&cfg) {
        Ok(out) => out,
        Err(e) => return outcome(false, format!("rolling run failed: {e}")),
    };
    let cols: Vec<f64> = moving.centroids.iter().map(|c| c.map_or(f64::NAN, |c| c.1)).collect();
    let direction = cfg.velocity_x.signum();
    let monotone = cols.windows(2).all(|w| (w[1] - w[0]) * direction > 0.0);
    let motion = rolling_motion(&cfg).unwrap();
    let t_first = moving.times[0];
    let t_last = *moving.times.last().unwrap();
    let true_shift = render_frame(&motion, t_last).unwrap().centroid().unwrap().1
        - render_frame(&motion, t_first).unwrap().centroid().unwrap().1;
    let shift = cols[cols.len() - 1] - cols[0];
    let shift_err = (shift - true_shift).abs() / true_shift.abs();

    let still_cfg = RunConfig {
        out_dir: dir.join("still"),
        velocity_x: 0.0,
        velocity_y: 0.0,
        ..RunConfig::default()
    };
    let still = match cmd_rolling(&still_cfg) {
        Ok(out) => out,
        Err(e) => return outcome(false, format!("zero-velocity run failed: {e}")),
    };
    let mut worst_pair = f64::INFINITY;
    for i in 0..still.quantized.len() {
        for j in i + 1..still.quantized.len() {
            worst_pair = worst_pair.min(psnr(&still.quantized[i], &still.quantized[j]).unwrap());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let still_ok = worst_pair > 30.0;
    outcome(
        monotone && shift_err <= 0.2 && still_ok && secs <= 300.0,
        format!(
            "centroids {} [{}]; displacement {shift:.2} px vs {true_shift:.2} px true ({:.1}% off) [{}]; zero-velocity min pairwise PSNR {worst_pair:.2} dB [{}]; {secs:.1} s",
            cols.iter().map(|c| format!("{c:.2}")).collect::<Vec<_>>().join(" "),
            if monotone { "pass" } else { "fail" },
            100.0 * shift_err,
            if shift_err <= 0.2 { "pass" } else { "fail" },
            if still_ok { "pass" } else { "fail" },
        ),
    )
}

fn criterion_7() -> Outcome {
    let a = Image2D::filled(8, 8, 100.0);
    let b = Image2D::filled(8, 8, 116.0);
    let p = psnr(&a, &b).unwrap();
    let inf = psnr(&a, &a).unwrap();
    let constant = information_entropy(&a, 256);
    let two = information_entropy(&Image2D::from_fn(4, 4, |r, _| if r < 2 { 0.0 } else { 255.0 }), 256);
    let uniform = information_entropy(&Image2D::from_fn(16, 16, |r, c| (r * 16 + c) as f64), 256);
    let pass = (p - 24.05).abs() <= 0.01 && inf == f64::INFINITY && constant == 0.0 && two == 1.0 && uniform == 8.0;
    outcome(
        pass,
        format!("constant-16 PSNR {p:.4} dB, identical {inf}, IE {constant} / {two} / {uniform} bits"),
    )
}

fn collect_files(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().display().to_string();
                out.push((rel, fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn criterion_8(first: &Path, scratch: &Path) -> Outcome {
    let cfg = RunConfig {
        out_dir: scratch.to_path_buf(),
        ..RunConfig::default()
    };
    if let Err(e) = cmd_sweep(&cfg) {
        return outcome(false, format!("repeat sweep failed: {e}"));
    }
    let a = collect_files(first);
    let b = collect_files(scratch);
    let names_match = a.iter().map(|f| &f.0).eq(b.iter().map(|f| &f.0));
    let differing: Vec<&str> = a
        .iter()
        .zip(&b)
        .filter(|(x, y)| x.1 != y.1)
        .map(|(x, _)| x.0.as_str())
        .collect();
    outcome(
        names_match && differing.is_empty() && !a.is_empty(),
        format!(
            "{} files compared, {} differ{}",
            a.len(),
            differing.len(),
            differing.first().map_or(String::new(), |f| format!(" (first: {f})"))
        ),
    )
}

fn main() {
    let tmp = tempfile::tempdir().unwrap();
    let sweep_a = tmp.path().join("sweep_a");
    let sweep_b = tmp.path().join("sweep_b");

    let criteria: Vec<Criterion> = vec![
        ("1 convolution oracle", Box::new(criterion_1)),
        ("2 adjoint", Box::new(criterion_2)),
        ("3 modified model consistency", Box::new(criterion_3)),
        ("4 solver monotonicity and gradient", Box::new(criterion_4)),
        ("5 sampling-rate sweep trend", Box::new(|| criterion_5(&sweep_a))),
        ("6 rolling-shutter frames", Box::new(|| criterion_6(&tmp.path().join("rolling")))),
        ("7 metrics", Box::new(criterion_7)),
        ("8 determinism", Box::new(|| criterion_8(&sweep_a, &sweep_b))),
    ];

    let mut failures = 0;
    for (name, run) in criteria {
        let result = std::panic::catch_unwind(std::panic::AssertUnwindSafe(run))
            .unwrap_or_else(|_| outcome(false, "panicked"));
        if !result.pass {
            failures += 1;
        }
        println!(
            "criterion {name}: {} - {}",
            if result.pass { "PASS" } else { "FAIL" },
            result.detail
        );
    }
    println!("{failures} of 8 criteria failed");
    if failures > 0 {
        std::process::exit(1);
    }
}
