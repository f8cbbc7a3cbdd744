//! Reproducibility and calibration of ensemble estimates.

use qtraj_core::ensemble::{born_curve, distribution_snapshots, EnsembleConfig};

fn z_scores(n_traj: usize, seeds: std::ops::Range<u64>) -> Vec<f64> {
    let x = 0.3;
    seeds
        .map(|seed| {
            let cfg = EnsembleConfig { x_grid: vec![x], n_traj, seed, ..EnsembleConfig::default() };
            let p = &born_curve(&cfg).unwrap().points[0];
            (p.p_hat - x) / p.std_err_at(x)
        })
        .collect()
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, (v.iter().map(|z| (z - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt())
}

#[test]
fn z_scores_are_standard_normal() {
    let (m, sd) = mean_sd(&z_scores(1_000, 0..100));
    // Mean of 100 standard normals has SE 0.1; SD has SE about 0.07.
    assert!(m.abs() < 0.3, "{m}");
    assert!((sd - 1.0).abs() < 0.25, "{sd}");
}

#[test]
#[ignore = "about 150 s on one core; the mean has SE 0.1, so the 0.1 bound is not a 3-sigma test"]
fn z_scores_at_full_size() {
    let (m, sd) = mean_sd(&z_scores(10_000, 0..100));
    println!("mean z = {m:.4}, sd = {sd:.4}");
    assert!(m.abs() < 0.1, "{m}");
}

#[test]
fn distribution_is_bit_identical_across_workers() {
    let base = EnsembleConfig { n_traj: 700, x_grid: vec![0.3, 0.6], tau_snapshots: vec![0.5, 2.0], ..EnsembleConfig::default() };
    let one = distribution_snapshots(&EnsembleConfig { threads: 1, ..base.clone() }).unwrap();
    for threads in [2, 5] {
        assert_eq!(one, distribution_snapshots(&EnsembleConfig { threads, ..base.clone() }).unwrap());
    }
}

#[test]
fn late_snapshots_classify_every_trajectory() {
    let cfg = EnsembleConfig { n_traj: 2_000, x_grid: vec![0.6], tau_snapshots: vec![1.0, 10.0], max_tau: 40.0, ..EnsembleConfig::default() };
    let r = distribution_snapshots(&cfg).unwrap().remove(0);
    for s in &r.snapshots {
        assert_eq!(s.n_unclassified, 0);
        assert_eq!(s.peaks[0].count + s.peaks[1].count, 2_000);
        assert_eq!(s.histogram.total() + s.histogram.underflow + s.histogram.overflow, 2_000);
    }
    // Born invariance of <tanh z>.
    for s in &r.snapshots {
        assert!((s.mean_tanh.value - 0.2).abs() < 3.0 * s.mean_tanh.std_err, "tau={}", s.tau);
    }
}
