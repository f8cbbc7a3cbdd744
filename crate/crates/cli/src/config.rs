//! Resolved run configurations. Precedence: command-line flags, then the
//! `--config` JSON file, then built-in defaults.

use std::fs;
use std::path::{Path, PathBuf};

use qtraj_core::diffusion::Scheme;
use qtraj_core::NoiseFamily;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const DEFAULT_N_TRAJ: usize = 100_000;
pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_DT: f64 = 1e-3;

/// Reads a config file. A run manifest is accepted too, in which case its
/// `config` object is used.
pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> CliResult<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let bad = |e: serde_json::Error| CliError::Usage(format!("invalid config {}: {e}", path.display()));
    let mut value: serde_json::Value = serde_json::from_str(&text).map_err(bad)?;
    if value.get("command").is_some() {
        if let Some(inner) = value.get_mut("config") {
            value = inner.take();
        }
    }
    serde_json::from_value(value).map_err(bad)
}

fn default_x_grid() -> Vec<f64> {
    (1..=9).map(|i| i as f64 / 10.0).collect()
}

fn check_n_traj(n: usize) -> CliResult<()> {
    if n == 0 {
        return Err(CliError::Usage("n-traj must be positive".into()));
    }
    Ok(())
}

fn check_snapshots(taus: &[f64], max_tau: f64) -> CliResult<()> {
    if taus.is_empty() {
        return Err(CliError::Usage("tau-snapshots must not be empty".into()));
    }
    if taus.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
        return Err(CliError::Usage("tau-snapshots must be finite and >= 0".into()));
    }
    if taus.windows(2).any(|w| w[0] > w[1]) {
        return Err(CliError::Usage("tau-snapshots must be sorted ascending".into()));
    }
    if taus.last().is_some_and(|t| *t > max_tau) {
        return Err(CliError::Usage(format!("tau-snapshots exceed max-tau {max_tau}")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BornCurveConfig {
    pub gsxi: Vec<f64>,
    pub x_grid: Vec<f64>,
    pub n_traj: usize,
    pub g: f64,
    pub dt: f64,
    pub seed: u64,
    pub scheme: Scheme,
    pub noise: NoiseFamily,
    pub max_tau: f64,
    pub out: PathBuf,
}

impl Default for BornCurveConfig {
    fn default() -> Self {
        Self {
            gsxi: vec![1.0],
            x_grid: default_x_grid(),
            n_traj: DEFAULT_N_TRAJ,
            g: 1.0,
            dt: DEFAULT_DT,
            seed: DEFAULT_SEED,
            scheme: Scheme::Integrated,
            noise: NoiseFamily::Gaussian,
            max_tau: 25.0,
            out: PathBuf::from("born_curve.csv"),
        }
    }
}

impl BornCurveConfig {
    pub fn validate(&self) -> CliResult<()> {
        check_n_traj(self.n_traj)?;
        if self.gsxi.is_empty() || self.gsxi.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(CliError::Usage("gsxi values must be finite and >= 0".into()));
        }
        if self.x_grid.is_empty() || self.x_grid.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(CliError::Usage("x-grid values must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistributionConfig {
    pub x: f64,
    pub tau_snapshots: Vec<f64>,
    pub n_traj: usize,
    pub g: f64,
    pub dt: f64,
    pub seed: u64,
    pub scheme: Scheme,
    pub noise: NoiseFamily,
    pub max_tau: f64,
    pub out_dir: PathBuf,
}

impl Default for DistributionConfig {
    fn default() -> Self {
        Self {
            x: 0.6,
            tau_snapshots: vec![1.0, 3.0, 10.0],
            n_traj: DEFAULT_N_TRAJ,
            g: 1.0,
            dt: DEFAULT_DT,
            seed: DEFAULT_SEED,
            scheme: Scheme::Integrated,
            noise: NoiseFamily::Gaussian,
            max_tau: 40.0,
            out_dir: PathBuf::from("distribution"),
        }
    }
}

impl DistributionConfig {
    pub fn validate(&self) -> CliResult<()> {
        check_n_traj(self.n_traj)?;
        if !(self.x > 0.0 && self.x < 1.0) {
            return Err(CliError::Usage("x must be interior for diffusion".into()));
        }
        check_snapshots(&self.tau_snapshots, self.max_tau)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JumpConfig {
    pub x: f64,
    pub tau_snapshots: Vec<f64>,
    pub n_traj: usize,
    pub rate_multiplier: f64,
    pub g: f64,
    pub dt: f64,
    pub seed: u64,
    pub max_tau: f64,
    pub out: PathBuf,
}

impl Default for JumpConfig {
    fn default() -> Self {
        Self {
            x: 0.6,
            tau_snapshots: vec![0.0, 0.25, 0.5, 1.0, 2.0, 5.0],
            n_traj: DEFAULT_N_TRAJ,
            rate_multiplier: 1.0,
            g: 1.0,
            dt: DEFAULT_DT,
            seed: DEFAULT_SEED,
            max_tau: 25.0,
            out: PathBuf::from("jump.csv"),
        }
    }
}

impl JumpConfig {
    pub fn validate(&self) -> CliResult<()> {
        check_n_traj(self.n_traj)?;
        if !(0.0..=1.0).contains(&self.x) {
            return Err(CliError::Usage("x must lie in [0, 1]".into()));
        }
        if !(self.rate_multiplier >= 0.0 && self.rate_multiplier.is_finite()) {
            return Err(CliError::Usage("rate-multiplier must be finite and >= 0".into()));
        }
        check_snapshots(&self.tau_snapshots, self.max_tau)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_file_is_default() {
        assert_eq!(load::<JumpConfig>(None).unwrap(), JumpConfig::default());
    }

    #[test]
    fn partial_config_and_manifest_wrapping() {
        let dir = tempfile::tempdir().unwrap();
        let plain = dir.path().join("c.json");
        fs::write(&plain, r#"{"n_traj": 7, "x": 0.3}"#).unwrap();
        let c: JumpConfig = load(Some(&plain)).unwrap();
        assert_eq!((c.n_traj, c.x, c.seed), (7, 0.3, DEFAULT_SEED));

        let wrapped = dir.path().join("m.json");
        fs::write(&wrapped, r#"{"command": "jump", "config": {"n_traj": 9}}"#).unwrap();
        assert_eq!(load::<JumpConfig>(Some(&wrapped)).unwrap().n_traj, 9);

        let typo = dir.path().join("t.json");
        fs::write(&typo, r#"{"ntraj": 9}"#).unwrap();
        assert!(matches!(load::<JumpConfig>(Some(&typo)), Err(CliError::Usage(_))));
        assert!(matches!(
            load::<JumpConfig>(Some(&dir.path().join("absent.json"))),
            Err(CliError::Io { .. })
        ));
    }

    #[test]
    fn validation_messages() {
        let c = BornCurveConfig { n_traj: 0, ..Default::default() };
        assert_eq!(c.validate().unwrap_err().to_string(), "n-traj must be positive");
        let d = DistributionConfig { x: 0.0, ..Default::default() };
        assert_eq!(d.validate().unwrap_err().to_string(), "x must be interior for diffusion");
        let j = JumpConfig { tau_snapshots: vec![2.0, 1.0], ..Default::default() };
        assert!(j.validate().is_err());
    }
}
