use ecam_core::edge::{apply_edge_operator, edge_kernel_default, InverseSpec};
use ecam_core::imaging::{crop_center, pad_center};
use ecam_core::metrics::{psnr, quantize_8bit};
use ecam_core::sim::{make_sampling_mask, simulate_measurement, synthesize_psf, ForwardModel, NoiseSpec, PsfParams};
use ecam_core::solver::{reconstruct_edges, reconstruct_object, SolveConfig};
use ecam_core::{GridSpec, Image2D, Mask};

fn model(n: usize, rate: f64, seed: u64) -> ForwardModel {
    let grid = GridSpec::new(n, n).unwrap();
    let psf = synthesize_psf(&PsfParams::new(grid, seed)).unwrap();
    let mask = make_sampling_mask(&grid, rate, seed + 1).unwrap();
    ForwardModel::new(psf, mask, grid).unwrap()
}

fn local_peaks(img: &Image2D, count: usize) -> Vec<(usize, usize)> {
    let mut idx: Vec<usize> = (0..img.len()).collect();
    idx.sort_by(|&a, &b| img.data()[b].total_cmp(&img.data()[a]));
    let mut peaks: Vec<(usize, usize)> = Vec::new();
    for i in idx {
        let p = (i / img.cols(), i % img.cols());
        if peaks.iter().all(|q| p.0.abs_diff(q.0) > 2 || p.1.abs_diff(q.1) > 2) {
            peaks.push(p);
        }
        if peaks.len() == count {
            break;
        }
    }
    peaks
}

#[test]
fn two_points_recovered_at_true_locations() {
    let m = model(16, 0.9, 3);
    let grid = *m.grid();
    let mut obj = Image2D::zeros(16, 16);
    obj[(4, 5)] = 1.0;
    obj[(11, 10)] = 1.0;
    let y = simulate_measurement(&pad_center(&obj, &grid).unwrap(), &m, &NoiseSpec::none()).unwrap();
    let res = reconstruct_object(&y, &m, &SolveConfig::default()).unwrap();
    let est = crop_center(&res.estimate, 16, 16).unwrap();
    let mut peaks = local_peaks(&est, 2);
    peaks.sort();
    for (found, truth) in peaks.iter().zip([(4, 5), (11, 10)]) {
        assert!(found.0.abs_diff(truth.0) <= 1 && found.1.abs_diff(truth.1) <= 1, "{peaks:?}");
    }
}

#[test]
fn edge_path_recovers_square_outline() {
    let m = model(24, 1.0, 9);
    let grid = *m.grid();
    let obj = Image2D::from_fn(24, 24, |r, c| if (7..17).contains(&r) && (7..17).contains(&c) { 1.0 } else { 0.0 });
    let padded = pad_center(&obj, &grid).unwrap();
    let y = simulate_measurement(&padded, &m, &NoiseSpec::none()).unwrap();
    let cfg = SolveConfig {
        nonneg: false,
        ..SolveConfig::default()
    };
    let res = reconstruct_edges(&y, &m, &edge_kernel_default(), &InverseSpec::default(), &cfg).unwrap();
    let truth = crop_center(&apply_edge_operator(&padded, &edge_kernel_default()), 24, 24).unwrap();
    let est = crop_center(&res.estimate, 24, 24).unwrap();
    let corr = est.dot(&truth).unwrap() / (est.norm() * truth.norm());
    assert!(corr > 0.8, "correlation {corr}");
    assert!(psnr(&quantize_8bit(&est), &quantize_8bit(&truth)).unwrap() > 15.0);
    assert!(res.objective_trace.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn masks_are_nested_across_rates() {
    let grid = GridSpec::new(20, 20).unwrap();
    let rates = [0.2, 0.3, 0.5, 0.7, 0.9, 1.0];
    let masks: Vec<Mask> = rates.iter().map(|&r| make_sampling_mask(&grid, r, 77).unwrap()).collect();
    for (mask, rate) in masks.iter().zip(rates) {
        assert_eq!(mask.count(), (rate * 1600.0_f64).round() as usize);
    }
    for pair in masks.windows(2) {
        assert_eq!(pair[0].and(&pair[1]).unwrap(), pair[0]);
    }
    assert!(masks[5].is_full());
    assert_ne!(make_sampling_mask(&grid, 0.5, 78).unwrap(), masks[2]);
}

#[test]
fn reconstructions_are_bit_reproducible() {
    let m = model(16, 0.5, 21);
    let grid = *m.grid();
    let obj = Image2D::from_fn(16, 16, |r, c| ((r / 4 + c / 4) % 2) as f64);
    let y = simulate_measurement(&pad_center(&obj, &grid).unwrap(), &m, &NoiseSpec::gaussian(0.01, 5)).unwrap();
    let cfg = SolveConfig {
        max_iters: 30,
        ..SolveConfig::default()
    };
    let a = reconstruct_object(&y, &m, &cfg).unwrap();
    let b = reconstruct_object(&y, &m, &cfg).unwrap();
    assert_eq!(a, b);
    let spec = InverseSpec::default();
    let k = edge_kernel_default();
    assert_eq!(
        reconstruct_edges(&y, &m, &k, &spec, &cfg).unwrap(),
        reconstruct_edges(&y, &m, &k, &spec, &cfg).unwrap()
    );
}

#[test]
fn measurement_offset_does_not_change_edges() {
    // The edge model has no DC response, so a constant added to every
    // sampled pixel carries no edge information.
    let m = model(16, 0.6, 31);
    let grid = *m.grid();
    let obj = Image2D::from_fn(16, 16, |r, _| if r < 8 { 1.0 } else { 0.0 });
    let y = simulate_measurement(&pad_center(&obj, &grid).unwrap(), &m, &NoiseSpec::none()).unwrap();
    let shifted = m.mask().apply(&y.map(|v| v + 0.25)).unwrap();
    let cfg = SolveConfig {
        max_iters: 40,
        nonneg: false,
        tau: Some(1e-4),
        ..SolveConfig::default()
    };
    let k = edge_kernel_default();
    let spec = InverseSpec::default();
    let a = reconstruct_edges(&y, &m, &k, &spec, &cfg).unwrap();
    let b = reconstruct_edges(&shifted, &m, &k, &spec, &cfg).unwrap();
    assert!(a.estimate.sub(&b.estimate).unwrap().max_abs() < 1e-9);
}
