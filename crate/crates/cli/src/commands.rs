//! The `born-curve`, `distribution` and `jump` subcommands.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use qtraj_core::analytic::{fokker_planck_density, jump_outcome_probability, jump_survival};
use qtraj_core::ensemble::{self, EnsembleConfig, Model};
use serde_json::json;

use crate::config::{BornCurveConfig, DistributionConfig, JumpConfig};
use crate::error::{CliError, CliResult};
use crate::output::{fmt_f64, manifest_path_for, version_string, write_csv, RunManifest};

/// Added to every 3-sigma band so that zero-variance estimates still
/// tolerate round-off.
pub const ROUND_OFF_FLOOR: f64 = 1e-12;

fn manifest(command: &str, config: &impl serde::Serialize, seed: u64, start: Instant) -> RunManifest {
    RunManifest {
        command: command.into(),
        config: serde_json::to_value(config).expect("config serializes"),
        seed,
        version: version_string(),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        outputs: Vec::new(),
        warnings: Vec::new(),
        summary: serde_json::Value::Null,
    }
}

pub fn born_curve(cfg: &BornCurveConfig) -> CliResult<RunManifest> {
    let start = Instant::now();
    cfg.validate()?;
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    for &gsxi in &cfg.gsxi {
        let ec = EnsembleConfig {
            model: Model::Diffusion,
            n_traj: cfg.n_traj,
            x_grid: cfg.x_grid.clone(),
            gsxi,
            g: cfg.g,
            dt: cfg.dt,
            scheme: cfg.scheme,
            noise: cfg.noise,
            seed: cfg.seed,
            max_tau: cfg.max_tau,
            ..EnsembleConfig::default()
        };
        let curve = ensemble::born_curve(&ec)?;
        if curve.flagged {
            let worst = curve.points.iter().map(|p| p.unabsorbed_fraction()).fold(0.0, f64::max);
            warnings.push(format!(
                "gsxi={gsxi}: {:.3}% of trajectories unabsorbed at max-tau {}; raise the budget",
                100.0 * worst,
                cfg.max_tau
            ));
        }
        for p in &curve.points {
            rows.push(vec![
                fmt_f64(gsxi),
                fmt_f64(p.x),
                fmt_f64(p.p_hat),
                fmt_f64(p.std_err),
                p.n_absorbed.to_string(),
                p.n_total.to_string(),
            ]);
        }
    }
    write_csv(&cfg.out, &["gsxi", "x", "p_hat", "std_err", "n_absorbed", "n_total"], &rows)?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let mut m = manifest("born-curve", cfg, cfg.seed, start);
    m.outputs = vec![cfg.out.clone()];
    m.warnings = warnings;
    m.wall_clock_seconds = start.elapsed().as_secs_f64();
    m.write(&manifest_path_for(&cfg.out))?;
    Ok(m)
}

fn tau_tag(tau: f64) -> String {
    fmt_f64(tau)
}

pub fn distribution(cfg: &DistributionConfig) -> CliResult<RunManifest> {
    let start = Instant::now();
    cfg.validate()?;
    let ec = EnsembleConfig {
        model: Model::Diffusion,
        n_traj: cfg.n_traj,
        x_grid: vec![cfg.x],
        g: cfg.g,
        dt: cfg.dt,
        scheme: cfg.scheme,
        noise: cfg.noise,
        tau_snapshots: cfg.tau_snapshots.clone(),
        seed: cfg.seed,
        max_tau: cfg.max_tau,
        ..EnsembleConfig::default()
    };
    let result = ensemble::distribution_snapshots(&ec)?.remove(0);
    fs::create_dir_all(&cfg.out_dir).map_err(|e| CliError::io(&cfg.out_dir, e))?;

    let mut outputs: Vec<PathBuf> = Vec::new();
    let mut summary_rows = Vec::new();
    for snap in &result.snapshots {
        let h = &snap.histogram;
        let edges = h.edges();
        let density = h.density();
        let rows: Vec<Vec<String>> = (0..h.counts.len())
            .map(|i| {
                vec![
                    fmt_f64(edges[i]),
                    fmt_f64(edges[i + 1]),
                    fmt_f64(0.5 * (edges[i] + edges[i + 1])),
                    h.counts[i].to_string(),
                    fmt_f64(density[i]),
                ]
            })
            .collect();
        let hist_path = cfg.out_dir.join(format!("hist_tau{}.csv", tau_tag(snap.tau)));
        write_csv(&hist_path, &["bin_lo", "bin_hi", "center", "count", "density"], &rows)?;
        outputs.push(hist_path);

        // The oracle is a delta at tau = 0; only write it for tau > 0.
        if snap.tau > 0.0 {
            let rows = edges
                .iter()
                .map(|&z| Ok(vec![fmt_f64(z), fmt_f64(fokker_planck_density(cfg.x, snap.tau, z)?)]))
                .collect::<CliResult<Vec<_>>>()?;
            let oracle_path = cfg.out_dir.join(format!("oracle_tau{}.csv", tau_tag(snap.tau)));
            write_csv(&oracle_path, &["z", "density"], &rows)?;
            outputs.push(oracle_path);
        }

        let [plus, minus] = &snap.peaks;
        summary_rows.push(vec![
            fmt_f64(snap.tau),
            fmt_f64(plus.mean.value),
            fmt_f64(plus.mean.std_err),
            fmt_f64(plus.expected_mean),
            fmt_f64(plus.variance.value),
            fmt_f64(plus.variance.std_err),
            fmt_f64(minus.mean.value),
            fmt_f64(minus.mean.std_err),
            fmt_f64(minus.expected_mean),
            fmt_f64(minus.variance.value),
            fmt_f64(minus.variance.std_err),
            fmt_f64(snap.tau),
            fmt_f64(snap.mean_tanh.value),
            fmt_f64(snap.mean_tanh.std_err),
            fmt_f64(snap.mean_sech.value),
            fmt_f64(snap.mean_sech.std_err),
            fmt_f64(snap.within_1pct),
            fmt_f64(snap.within_01pct),
            fmt_f64(snap.chi2),
            snap.chi2_dof.to_string(),
            snap.n_unclassified.to_string(),
        ]);
    }
    let summary_path = cfg.out_dir.join("summary.csv");
    write_csv(
        &summary_path,
        &[
            "tau",
            "peak0_mean",
            "peak0_mean_se",
            "peak0_mean_expected",
            "peak0_var",
            "peak0_var_se",
            "peak1_mean",
            "peak1_mean_se",
            "peak1_mean_expected",
            "peak1_var",
            "peak1_var_se",
            "var_expected",
            "mean_tanh",
            "mean_tanh_se",
            "mean_sech",
            "mean_sech_se",
            "frac_within_1pct",
            "frac_within_0.1pct",
            "chi2",
            "chi2_dof",
            "n_unclassified",
        ],
        &summary_rows,
    )?;
    outputs.push(summary_path);

    let mut m = manifest("distribution", cfg, cfg.seed, start);
    m.outputs = outputs;
    m.summary = json!({
        "z0": result.z0,
        "p_hat": result.outcome.p_hat,
        "p_std_err": result.outcome.std_err,
        "n_unabsorbed": result.outcome.n_unabsorbed(),
    });
    m.wall_clock_seconds = start.elapsed().as_secs_f64();
    m.write(&cfg.out_dir.join("manifest.json"))?;
    Ok(m)
}

pub fn jump(cfg: &JumpConfig) -> CliResult<RunManifest> {
    let start = Instant::now();
    cfg.validate()?;
    let ec = EnsembleConfig {
        model: Model::Jump,
        n_traj: cfg.n_traj,
        x_grid: vec![cfg.x],
        rate_multiplier: cfg.rate_multiplier,
        g: cfg.g,
        dt: cfg.dt,
        tau_snapshots: cfg.tau_snapshots.clone(),
        seed: cfg.seed,
        max_tau: cfg.max_tau,
        ..EnsembleConfig::default()
    };
    let result = ensemble::jump_ensemble(&ec)?.remove(0);
    let band = |se: f64| 3.0 * se + ROUND_OFF_FLOOR;
    let rows: Vec<Vec<String>> = result
        .snapshots
        .iter()
        .map(|s| {
            // Branch weights follow the scaled hazard; the no-jump position
            // does not depend on it.
            let survive = jump_survival(cfg.x, s.tau, cfg.rate_multiplier);
            vec![
                fmt_f64(s.tau),
                fmt_f64(s.moving_position.value),
                fmt_f64(s.oracle.moving_position),
                fmt_f64(band(s.moving_position.std_err)),
                fmt_f64(s.moving_weight.value),
                fmt_f64(survive),
                fmt_f64(band(s.moving_weight.std_err)),
                fmt_f64(s.stationary_weight.value),
                fmt_f64(1.0 - survive),
                fmt_f64(band(s.stationary_weight.std_err)),
            ]
        })
        .collect();
    write_csv(
        &cfg.out,
        &[
            "tau",
            "moving_pos_emp",
            "moving_pos_oracle",
            "moving_pos_3sigma",
            "moving_wt_emp",
            "moving_wt_oracle",
            "moving_wt_3sigma",
            "stationary_wt_emp",
            "stationary_wt_oracle",
            "stationary_wt_3sigma",
        ],
        &rows,
    )?;
    let mut m = manifest("jump", cfg, cfg.seed, start);
    m.outputs = vec![cfg.out.clone()];
    m.summary = json!({
        "p_hat": result.outcome.p_hat,
        "p_std_err": result.outcome.std_err,
        "p_oracle": 1.0 - jump_outcome_probability(cfg.x, cfg.rate_multiplier),
        "n_unabsorbed": result.outcome.n_unabsorbed(),
    });
    m.wall_clock_seconds = start.elapsed().as_secs_f64();
    m.write(&manifest_path_for(&cfg.out))?;
    Ok(m)
}

/// Reads a CSV back as raw rows, for tests and round-trip checks.
pub fn read_csv(path: &Path) -> CliResult<Vec<Vec<String>>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::io(path, std::io::Error::other(e.to_string())))?;
    r.records()
        .map(|rec| {
            rec.map(|row| row.iter().map(str::to_owned).collect())
                .map_err(|e| CliError::io(path, std::io::Error::other(e.to_string())))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn born_curve_writes_csv_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = BornCurveConfig {
            gsxi: vec![0.0, 1.0],
            x_grid: vec![0.2, 0.8],
            n_traj: 50,
            out: dir.path().join("b.csv"),
            ..Default::default()
        };
        let m = born_curve(&cfg).unwrap();
        let rows = read_csv(&cfg.out).unwrap();
        assert_eq!(rows.len(), 4);
        // Noise-free rows are deterministic.
        assert_eq!(rows[0][2], "0");
        assert_eq!(rows[1][2], "1");
        let back = RunManifest::read(&manifest_path_for(&cfg.out)).unwrap();
        assert_eq!(back.config, m.config);
    }

    #[test]
    fn oracle_integrates_to_one() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = DistributionConfig {
            n_traj: 200,
            tau_snapshots: vec![0.0, 1.0, 3.0],
            out_dir: dir.path().to_path_buf(),
            ..Default::default()
        };
        distribution(&cfg).unwrap();
        assert!(dir.path().join("hist_tau0.csv").exists());
        assert!(!dir.path().join("oracle_tau0.csv").exists());
        for tau in ["1", "3"] {
            let rows = read_csv(&dir.path().join(format!("oracle_tau{tau}.csv"))).unwrap();
            assert_eq!(rows.len(), 201);
            let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r[0].parse().unwrap(), r[1].parse().unwrap())).collect();
            let integral: f64 = pts.windows(2).map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1)).sum();
            assert!((integral - 1.0).abs() < 1e-6, "{integral}");
        }
    }

    #[test]
    fn jump_rows_at_zero_match_oracle() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = JumpConfig { n_traj: 100, out: dir.path().join("j.csv"), ..Default::default() };
        jump(&cfg).unwrap();
        let rows = read_csv(&cfg.out).unwrap();
        let pos: Vec<f64> = rows[0][1..4].iter().map(|v| v.parse().unwrap()).collect();
        assert!((pos[0] - pos[1]).abs() <= pos[2]);
        assert_eq!(rows[0][4], "1");
        assert_eq!(rows[0][7], "0");
    }
}
