//! Monte Carlo ensembles over grids of initial states.
//!
//! Trajectory `k` of grid point `p` always draws from the random stream
//! `stream_id(p, k)`. Per-trajectory results are collected in index order and
//! reduced sequentially, so every result is bit-identical for any worker
//! count.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{jump_distribution, GaussianMixture, JumpDistribution};
use crate::diffusion::{
    integrated_outcomes, simulate_multilevel, DiffusionParams, DiffusionPropagator, NoiseSpec, Scheme,
};
use crate::error::{Error, Result};
use crate::jump::{JumpParams, JumpPropagator};
use crate::noise::{stream_id, substream, NoiseFamily};
use crate::state::{DiagonalWeights, QubitState, ABSORB_EPS, Z_MAX};

/// Environment variable capping the worker count (0 or unset = all cores).
pub const THREADS_ENV: &str = "QTRAJ_THREADS";
/// Histogram resolution for distribution snapshots.
pub const HISTOGRAM_BINS: usize = 200;
/// Trajectories per parallel work item in Born-curve runs.
const CHUNK: usize = 1024;
/// Largest tolerated unabsorbed fraction before a Born curve is flagged.
pub const MAX_UNABSORBED_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    #[default]
    Diffusion,
    Jump,
    /// Discrete walk `z -> z +- eps` generated by the symmetric Kraus pair.
    BiasedWalk,
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Model::Diffusion => "diffusion",
            Model::Jump => "jump",
            Model::BiasedWalk => "biased_walk",
        })
    }
}

impl FromStr for Model {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "diffusion" => Ok(Model::Diffusion),
            "jump" => Ok(Model::Jump),
            "biased_walk" | "walk" => Ok(Model::BiasedWalk),
            other => Err(format!("unknown model '{other}' (expected diffusion, jump or biased_walk)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnsembleConfig {
    pub model: Model,
    pub n_traj: usize,
    /// Initial `rho00` values.
    pub x_grid: Vec<f64>,
    /// Noise strength `g S_xi` (diffusion).
    pub gsxi: f64,
    /// Jump-rate multiplier `lambda` (jump).
    pub rate_multiplier: f64,
    pub g: f64,
    pub dt: f64,
    pub scheme: Scheme,
    pub noise: NoiseFamily,
    /// Evolution parameters at which snapshots are taken, ascending.
    pub tau_snapshots: Vec<f64>,
    pub seed: u64,
    /// Evolution-parameter budget per trajectory.
    pub max_tau: f64,
    pub absorb_eps: f64,
    /// Phase of the initial off-diagonal element.
    pub phase: f64,
    /// Worker count; 0 defers to `QTRAJ_THREADS`, then to all cores.
    pub threads: usize,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            model: Model::Diffusion,
            n_traj: 100_000,
            x_grid: vec![0.6],
            gsxi: 1.0,
            rate_multiplier: 1.0,
            g: 1.0,
            dt: 1e-3,
            scheme: Scheme::Integrated,
            noise: NoiseFamily::Gaussian,
            tau_snapshots: Vec::new(),
            seed: 42,
            max_tau: 25.0,
            absorb_eps: ABSORB_EPS,
            phase: 0.0,
            threads: 0,
        }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_traj == 0 {
            return Err(Error::InvalidParameter("n_traj must be positive".into()));
        }
        if self.x_grid.is_empty() {
            return Err(Error::InvalidParameter("x_grid must not be empty".into()));
        }
        if let Some(x) = self.x_grid.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(Error::InvalidParameter(format!("x must lie in [0, 1], got {x}")));
        }
        if self.tau_snapshots.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
            return Err(Error::InvalidParameter("snapshots must be finite and >= 0".into()));
        }
        if self.tau_snapshots.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidParameter("snapshots must be sorted ascending".into()));
        }
        if !(self.gsxi >= 0.0 && self.gsxi.is_finite()) {
            return Err(Error::InvalidParameter(format!("gsxi must be >= 0, got {}", self.gsxi)));
        }
        if let Some(last) = self.tau_snapshots.last() {
            if *last > self.max_tau {
                return Err(Error::InvalidParameter(format!(
                    "snapshot tau {last} exceeds the budget {}",
                    self.max_tau
                )));
            }
        }
        match self.model {
            Model::Jump => self.jump_params(0)?.validate(),
            _ => self.diffusion_params()?.validate(),
        }
    }

    pub fn diffusion_params(&self) -> Result<DiffusionParams> {
        let p = DiffusionParams {
            g: self.g,
            dt: self.dt,
            scheme: self.scheme,
            max_tau: self.max_tau,
            absorb_eps: self.absorb_eps,
            record_stride: 0,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn noise_spec(&self, stream: u64) -> Result<NoiseSpec> {
        Ok(NoiseSpec::from_gsxi(self.noise, self.gsxi, self.g, self.seed)?.with_stream(stream))
    }

    pub fn jump_params(&self, stream: u64) -> Result<JumpParams> {
        let p = JumpParams {
            g: self.g,
            dt: self.dt,
            rate_multiplier: self.rate_multiplier,
            seed: self.seed,
            stream_id: stream,
            max_tau: self.max_tau,
            absorb_eps: self.absorb_eps,
            record_stride: 0,
        };
        p.validate()?;
        Ok(p)
    }

    fn initial_state(&self, x: f64) -> Result<QubitState> {
        QubitState::pure(x, self.phase)
    }
}

fn worker_count(requested: usize) -> usize {
    if requested > 0 {
        return requested;
    }
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .unwrap_or(0)
}

/// `f(0..n)` evaluated on a dedicated pool, returned in index order.
fn par_map<T, F>(threads: usize, n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count(threads))
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    pool.install(|| (0..n).into_par_iter().map(f).collect())
}

/// Sample mean and standard error.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Estimate {
    pub value: f64,
    pub std_err: f64,
}

impl Estimate {
    pub fn z_score(&self, expected: f64) -> f64 {
        (self.value - expected) / self.std_err
    }

    /// `|value - expected| <= k * std_err`.
    pub fn within(&self, expected: f64, k: f64) -> bool {
        (self.value - expected).abs() <= k * self.std_err
    }
}

/// Running sums for mean, variance and the variance of the variance.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: usize,
    s1: f64,
    s2: f64,
    s3: f64,
    s4: f64,
}

impl Moments {
    fn push(&mut self, v: f64) {
        self.n += 1;
        self.s1 += v;
        self.s2 += v * v;
        self.s3 += v * v * v;
        self.s4 += v * v * v * v;
    }

    fn mean(&self) -> Estimate {
        if self.n == 0 {
            return Estimate { value: f64::NAN, std_err: f64::NAN };
        }
        let n = self.n as f64;
        let m = self.s1 / n;
        let var = (self.s2 / n - m * m).max(0.0);
        Estimate { value: m, std_err: (var / n).sqrt() }
    }

    /// Unbiased sample variance; its standard error uses the fourth central
    /// moment, `sqrt((mu4 - sigma^4) / n)`.
    fn variance(&self) -> Estimate {
        if self.n < 2 {
            return Estimate { value: f64::NAN, std_err: f64::NAN };
        }
        let n = self.n as f64;
        let m = self.s1 / n;
        let (e2, e3, e4) = (self.s2 / n, self.s3 / n, self.s4 / n);
        let mu2 = (e2 - m * m).max(0.0);
        let mu4 = e4 - 4.0 * m * e3 + 6.0 * m * m * e2 - 3.0 * m.powi(4);
        Estimate { value: mu2 * n / (n - 1.0), std_err: ((mu4 - mu2 * mu2).max(0.0) / n).sqrt() }
    }
}

/// Fraction of trajectories ending at eigenstate 0 (`rho00 = 1`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutcomeEstimate {
    pub x: f64,
    pub p_hat: f64,
    /// `sqrt(p_hat (1 - p_hat) / n_total)`.
    pub std_err: f64,
    /// Trajectories absorbed at `rho00 = 1`.
    pub n_absorbed: usize,
    /// Trajectories absorbed at `rho00 = 0`.
    pub n_other: usize,
    pub n_total: usize,
}

impl OutcomeEstimate {
    fn from_outcomes(x: f64, outcomes: &[Option<usize>]) -> Self {
        let n_absorbed = outcomes.iter().filter(|o| **o == Some(0)).count();
        let n_other = outcomes.iter().filter(|o| **o == Some(1)).count();
        let n_total = outcomes.len();
        let p_hat = n_absorbed as f64 / n_total as f64;
        Self { x, p_hat, std_err: (p_hat * (1.0 - p_hat) / n_total as f64).sqrt(), n_absorbed, n_other, n_total }
    }

    pub fn n_unabsorbed(&self) -> usize {
        self.n_total - self.n_absorbed - self.n_other
    }

    pub fn unabsorbed_fraction(&self) -> f64 {
        self.n_unabsorbed() as f64 / self.n_total as f64
    }

    /// Standard error under the hypothesis `P = p`.
    pub fn std_err_at(&self, p: f64) -> f64 {
        (p * (1.0 - p) / self.n_total as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BornCurve {
    pub model: Model,
    pub gsxi: f64,
    pub points: Vec<OutcomeEstimate>,
    /// Set when some grid point left more than 1% of its trajectories
    /// unabsorbed within the budget.
    pub flagged: bool,
}

fn walk_epsilon(g_dt: f64) -> f64 {
    (0.5 * g_dt).exp().acosh()
}

fn walk_outcome(x: f64, eps: f64, max_steps: u64, absorb_eps: f64, rng: &mut impl Rng) -> Option<usize> {
    if x >= 1.0 {
        return Some(0);
    }
    if x <= 0.0 {
        return Some(1);
    }
    let z_abs = if absorb_eps > 0.0 { 0.5 * ((1.0 - absorb_eps) / absorb_eps).ln() } else { Z_MAX };
    let t = eps.tanh();
    let mut z = 0.5 * (x / (1.0 - x)).ln();
    for _ in 0..max_steps {
        if z >= z_abs {
            return Some(0);
        }
        if z <= -z_abs {
            return Some(1);
        }
        let u: f64 = rng.random();
        z += if u < 0.5 * (1.0 + z.tanh() * t) { eps } else { -eps };
    }
    None
}

fn trajectory_outcome(cfg: &EnsembleConfig, point: usize, x: f64, k: usize) -> Result<Option<usize>> {
    let sid = stream_id(point, k);
    match cfg.model {
        Model::Diffusion => {
            Ok(integrated_outcomes(x, &cfg.noise_spec(0)?, &cfg.diffusion_params()?, &[sid])?[0])
        }
        Model::Jump => {
            let mut prop = JumpPropagator::new(&QubitState::diagonal(x)?, &cfg.jump_params(sid)?)?;
            Ok(prop.run_to_absorption())
        }
        Model::BiasedWalk => {
            let p = cfg.diffusion_params()?;
            let mut rng = substream(cfg.seed, sid);
            Ok(walk_outcome(x, walk_epsilon(p.g_dt()), p.max_steps(), cfg.absorb_eps, &mut rng))
        }
    }
}

/// Outcome probability `P(x)` over `x_grid` at the configured `g S_xi`.
pub fn born_curve(cfg: &EnsembleConfig) -> Result<BornCurve> {
    cfg.validate()?;
    let mut points = Vec::with_capacity(cfg.x_grid.len());
    for (point, &x) in cfg.x_grid.iter().enumerate() {
        let outcomes = if cfg.model == Model::Diffusion {
            let chunks = cfg.n_traj.div_ceil(CHUNK);
            let blocks = par_map(cfg.threads, chunks, |c| {
                let streams: Vec<u64> =
                    (c * CHUNK..((c + 1) * CHUNK).min(cfg.n_traj)).map(|k| stream_id(point, k)).collect();
                integrated_outcomes(x, &cfg.noise_spec(0)?, &cfg.diffusion_params()?, &streams)
            })?;
            blocks.concat()
        } else {
            par_map(cfg.threads, cfg.n_traj, |k| trajectory_outcome(cfg, point, x, k))?
        };
        points.push(OutcomeEstimate::from_outcomes(x, &outcomes));
    }
    let flagged = points.iter().any(|p| p.unabsorbed_fraction() > MAX_UNABSORBED_FRACTION);
    Ok(BornCurve { model: cfg.model, gsxi: cfg.gsxi, points, flagged })
}

/// Outcome frequencies of an n-level diffusion ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct MultilevelOutcomes {
    pub initial: Vec<f64>,
    pub counts: Vec<usize>,
    /// Binomial estimate per outcome.
    pub frequencies: Vec<Estimate>,
    pub n_unabsorbed: usize,
    pub n_total: usize,
}

/// Runs `n_traj` n-level trajectories from `initial` with the integrated
/// scheme; `x_grid` is ignored.
pub fn multilevel_born(cfg: &EnsembleConfig, initial: &DiagonalWeights) -> Result<MultilevelOutcomes> {
    cfg.validate()?;
    let params = cfg.diffusion_params()?;
    let outcomes = par_map(cfg.threads, cfg.n_traj, |k| {
        Ok(simulate_multilevel(initial, &cfg.noise_spec(stream_id(0, k))?, &params)?.outcome)
    })?;
    let n = initial.len();
    let mut counts = vec![0usize; n];
    for i in outcomes.iter().flatten() {
        counts[*i] += 1;
    }
    let n_total = outcomes.len();
    Ok(MultilevelOutcomes {
        initial: initial.as_slice().to_vec(),
        frequencies: counts.iter().map(|&c| proportion(c, n_total)).collect(),
        n_unabsorbed: n_total - counts.iter().sum::<usize>(),
        counts,
        n_total,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
    pub underflow: u64,
    pub overflow: u64,
}

impl Histogram {
    pub fn new(lo: f64, hi: f64, bins: usize) -> Self {
        Self { lo, hi, counts: vec![0; bins], underflow: 0, overflow: 0 }
    }

    pub fn bin_width(&self) -> f64 {
        (self.hi - self.lo) / self.counts.len() as f64
    }

    pub fn edges(&self) -> Vec<f64> {
        let w = self.bin_width();
        (0..=self.counts.len()).map(|i| self.lo + i as f64 * w).collect()
    }

    pub fn centers(&self) -> Vec<f64> {
        let w = self.bin_width();
        (0..self.counts.len()).map(|i| self.lo + (i as f64 + 0.5) * w).collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.underflow + self.overflow
    }

    pub fn add(&mut self, v: f64) {
        if v < self.lo {
            self.underflow += 1;
        } else if v >= self.hi {
            self.overflow += 1;
        } else {
            let last = self.counts.len() - 1;
            let i = ((v - self.lo) / self.bin_width()) as usize;
            self.counts[i.min(last)] += 1;
        }
    }

    /// Count divided by `total * bin_width`.
    pub fn density(&self) -> Vec<f64> {
        let norm = self.total() as f64 * self.bin_width();
        self.counts.iter().map(|&c| c as f64 / norm).collect()
    }
}

/// Moments of `z` among trajectories that end at one eigenstate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakStats {
    pub outcome: usize,
    pub count: usize,
    pub mean: Estimate,
    pub variance: Estimate,
    pub expected_mean: f64,
    pub expected_variance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub tau: f64,
    pub histogram: Histogram,
    /// Peaks for outcomes 0 and 1.
    pub peaks: [PeakStats; 2],
    /// Trajectories still unabsorbed when the budget ran out; excluded from
    /// the peaks.
    pub n_unclassified: usize,
    pub mean_tanh: Estimate,
    pub mean_sech: Estimate,
    /// Fraction with `min(rho00, rho11) <= 0.01`.
    pub within_1pct: f64,
    /// Fraction with `min(rho00, rho11) <= 0.001`.
    pub within_01pct: f64,
    /// Pearson chi-square against the mixture over bins expecting >= 5.
    pub chi2: f64,
    pub chi2_dof: usize,
    pub mean_rho01: Complex64,
    /// `<rho01(tau)> / rho01(0)`, projected on the initial phase.
    pub coherence_ratio: Estimate,
    pub n_total: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistributionResult {
    pub x: f64,
    pub z0: f64,
    pub snapshots: Vec<Snapshot>,
    pub outcome: OutcomeEstimate,
}

struct PathSample {
    z: Vec<f64>,
    rho01: Vec<Complex64>,
    outcome: Option<usize>,
}

fn diffusion_path(cfg: &EnsembleConfig, point: usize, x: f64, k: usize) -> Result<PathSample> {
    let initial = cfg.initial_state(x)?;
    let params = DiffusionParams { absorb_eps: 0.0, ..cfg.diffusion_params()? };
    let mut prop = DiffusionPropagator::new(&initial, &cfg.noise_spec(stream_id(point, k))?, &params)?;
    let mut z = Vec::with_capacity(cfg.tau_snapshots.len());
    let mut rho01 = Vec::with_capacity(cfg.tau_snapshots.len());
    for &tau in &cfg.tau_snapshots {
        prop.advance_to_tau(tau);
        z.push(prop.z());
        rho01.push(prop.state().rho01());
    }
    prop.set_absorb_eps(cfg.absorb_eps);
    let outcome = prop.run_to_absorption();
    Ok(PathSample { z, rho01, outcome })
}

fn chi_square(hist: &Histogram, mix: &GaussianMixture) -> (f64, usize) {
    let n = hist.total() as f64;
    let edges = hist.edges();
    let mut chi2 = 0.0;
    let mut bins = 0usize;
    for (i, &c) in hist.counts.iter().enumerate() {
        let e = n * (mix.cdf(edges[i + 1]) - mix.cdf(edges[i]));
        if e >= 5.0 {
            chi2 += (c as f64 - e).powi(2) / e;
            bins += 1;
        }
    }
    (chi2, bins.saturating_sub(1))
}

fn ratio_to(v: Complex64, reference: Complex64) -> f64 {
    (v / reference).re
}

/// Histograms and moments of `z` at each snapshot for the diffusion model.
/// Absorption is suspended until the last snapshot so that late snapshots
/// see the full distribution; afterwards each trajectory is run to its
/// outcome, which labels the peak it belongs to.
pub fn distribution_snapshots(cfg: &EnsembleConfig) -> Result<Vec<DistributionResult>> {
    cfg.validate()?;
    if cfg.model != Model::Diffusion {
        return Err(Error::InvalidParameter("distribution snapshots need the diffusion model".into()));
    }
    let mut out = Vec::with_capacity(cfg.x_grid.len());
    for (point, &x) in cfg.x_grid.iter().enumerate() {
        if !(x > 0.0 && x < 1.0) {
            return Err(Error::Degenerate { x });
        }
        let z0 = (2.0 * x - 1.0).atanh();
        let rho01_0 = cfg.initial_state(x)?.rho01();
        let paths = par_map(cfg.threads, cfg.n_traj, |k| diffusion_path(cfg, point, x, k))?;
        let outcomes: Vec<Option<usize>> = paths.iter().map(|p| p.outcome).collect();
        let mut snapshots = Vec::with_capacity(cfg.tau_snapshots.len());
        for (s, &tau) in cfg.tau_snapshots.iter().enumerate() {
            let half = z0.abs() + tau + 5.0 * tau.sqrt();
            let mut histogram = Histogram::new(-half, half, HISTOGRAM_BINS);
            let mut peaks = [Moments::default(); 2];
            let (mut tanh_m, mut sech_m, mut ratio_m) = (Moments::default(), Moments::default(), Moments::default());
            let (mut n1, mut n01, mut unclassified) = (0usize, 0usize, 0usize);
            let mut rho01_sum = Complex64::new(0.0, 0.0);
            for p in &paths {
                let z = p.z[s];
                histogram.add(z);
                match p.outcome {
                    Some(i) => peaks[i].push(z),
                    None => unclassified += 1,
                }
                tanh_m.push(z.tanh());
                sech_m.push(crate::state::sech(z));
                let minor = 1.0 / (1.0 + (2.0 * z.abs()).exp());
                n1 += usize::from(minor <= 0.01);
                n01 += usize::from(minor <= 0.001);
                rho01_sum += p.rho01[s];
                if rho01_0.norm() > 0.0 {
                    ratio_m.push(ratio_to(p.rho01[s], rho01_0));
                }
            }
            let n = paths.len() as f64;
            let (chi2, chi2_dof) = match GaussianMixture::new(x, tau) {
                Ok(mix) => chi_square(&histogram, &mix),
                Err(_) => (f64::NAN, 0),
            };
            let peak = |i: usize, center: f64| PeakStats {
                outcome: i,
                count: peaks[i].n,
                mean: peaks[i].mean(),
                variance: peaks[i].variance(),
                expected_mean: center,
                expected_variance: tau,
            };
            snapshots.push(Snapshot {
                tau,
                histogram,
                peaks: [peak(0, z0 + tau), peak(1, z0 - tau)],
                n_unclassified: unclassified,
                mean_tanh: tanh_m.mean(),
                mean_sech: sech_m.mean(),
                within_1pct: n1 as f64 / n,
                within_01pct: n01 as f64 / n,
                chi2,
                chi2_dof,
                mean_rho01: rho01_sum / n,
                coherence_ratio: ratio_m.mean(),
                n_total: paths.len(),
            });
        }
        out.push(DistributionResult { x, z0, snapshots, outcome: OutcomeEstimate::from_outcomes(x, &outcomes) });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpSnapshot {
    pub tau: f64,
    /// Mean `rho00` over trajectories that have not jumped.
    pub moving_position: Estimate,
    pub moving_weight: Estimate,
    pub stationary_weight: Estimate,
    pub oracle: JumpDistribution,
    pub coherence_ratio: Estimate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JumpEnsembleResult {
    pub x: f64,
    pub rate_multiplier: f64,
    pub snapshots: Vec<JumpSnapshot>,
    /// Fraction ending at `rho00 = 1`; `x` on the Born point, `x^lambda`
    /// otherwise.
    pub outcome: OutcomeEstimate,
}

struct JumpPath {
    rho00: Vec<f64>,
    jumped: Vec<bool>,
    rho01: Vec<Complex64>,
    outcome: Option<usize>,
}

fn jump_path(cfg: &EnsembleConfig, point: usize, x: f64, k: usize) -> Result<JumpPath> {
    let params = JumpParams { absorb_eps: 0.0, ..cfg.jump_params(stream_id(point, k))? };
    let mut prop = JumpPropagator::new(&cfg.initial_state(x)?, &params)?;
    let n = cfg.tau_snapshots.len();
    let mut path = JumpPath { rho00: Vec::with_capacity(n), jumped: Vec::with_capacity(n), rho01: Vec::with_capacity(n), outcome: None };
    for &tau in &cfg.tau_snapshots {
        prop.advance_to_tau(tau);
        path.rho00.push(prop.rho00());
        path.jumped.push(prop.jumped());
        path.rho01.push(prop.state().rho01());
    }
    prop.set_absorb_eps(cfg.absorb_eps);
    path.outcome = prop.run_to_absorption();
    Ok(path)
}

fn proportion(k: usize, n: usize) -> Estimate {
    let p = k as f64 / n as f64;
    Estimate { value: p, std_err: (p * (1.0 - p) / n as f64).sqrt() }
}

/// Two-delta decomposition of the jump-model ensemble at each snapshot, and
/// the long-time outcome split.
pub fn jump_ensemble(cfg: &EnsembleConfig) -> Result<Vec<JumpEnsembleResult>> {
    cfg.validate()?;
    if cfg.model != Model::Jump {
        return Err(Error::InvalidParameter("jump ensemble needs the jump model".into()));
    }
    let mut out = Vec::with_capacity(cfg.x_grid.len());
    for (point, &x) in cfg.x_grid.iter().enumerate() {
        let rho01_0 = cfg.initial_state(x)?.rho01();
        let paths = par_map(cfg.threads, cfg.n_traj, |k| jump_path(cfg, point, x, k))?;
        let outcomes: Vec<Option<usize>> = paths.iter().map(|p| p.outcome).collect();
        let n = paths.len();
        let mut snapshots = Vec::with_capacity(cfg.tau_snapshots.len());
        for (s, &tau) in cfg.tau_snapshots.iter().enumerate() {
            let mut pos = Moments::default();
            let mut ratio = Moments::default();
            let mut jumped = 0usize;
            for p in &paths {
                if p.jumped[s] {
                    jumped += 1;
                } else {
                    pos.push(p.rho00[s]);
                }
                if rho01_0.norm() > 0.0 {
                    ratio.push(ratio_to(p.rho01[s], rho01_0));
                }
            }
            snapshots.push(JumpSnapshot {
                tau,
                moving_position: pos.mean(),
                moving_weight: proportion(n - jumped, n),
                stationary_weight: proportion(jumped, n),
                oracle: jump_distribution(x, tau)?,
                coherence_ratio: ratio.mean(),
            });
        }
        out.push(JumpEnsembleResult {
            x,
            rate_multiplier: cfg.rate_multiplier,
            snapshots,
            outcome: OutcomeEstimate::from_outcomes(x, &outcomes),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecoherenceRow {
    pub tau: f64,
    /// Ensemble-averaged density matrix.
    pub mean_state: QubitState,
    /// Lindblad prediction.
    pub lindblad: QubitState,
    pub coherence_ratio: Estimate,
    /// `e^{-tau/2}` (diffusion) or `e^{-tau}` (jump).
    pub expected_ratio: f64,
    /// Largest entry-wise deviation from the Lindblad matrix.
    pub max_deviation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoherenceReport {
    pub model: Model,
    pub x: f64,
    pub rows: Vec<DecoherenceRow>,
}

/// Ensemble average of the full qubit density matrix against the Lindblad
/// solution, for the first entry of `x_grid`.
pub fn decoherence_comparison(cfg: &EnsembleConfig) -> Result<DecoherenceReport> {
    use crate::analytic::{lindblad_solution, DecoherenceModel};

    cfg.validate()?;
    let x = cfg.x_grid[0];
    let initial = cfg.initial_state(x)?;
    if initial.rho01().norm() == 0.0 {
        return Err(Error::InvalidParameter("decoherence comparison needs rho01(0) != 0".into()));
    }
    let (dmodel, rate) = match cfg.model {
        Model::Diffusion => (DecoherenceModel::Diffusion, 0.5),
        Model::Jump => (DecoherenceModel::Jump, 1.0),
        Model::BiasedWalk => {
            return Err(Error::InvalidParameter("decoherence comparison needs diffusion or jump".into()))
        }
    };
    // Per snapshot: (mean rho00, mean rho01, ratio moments).
    let stats: Vec<(f64, Complex64, Moments)> = match cfg.model {
        Model::Diffusion => {
            let paths = par_map(cfg.threads, cfg.n_traj, |k| diffusion_path(cfg, 0, x, k))?;
            reduce_states(cfg, initial, paths.iter().map(|p| (p.z.iter().map(|z| crate::state::rho00_from_z(*z)).collect(), p.rho01.clone())))
        }
        _ => {
            let paths = par_map(cfg.threads, cfg.n_traj, |k| jump_path(cfg, 0, x, k))?;
            reduce_states(cfg, initial, paths.iter().map(|p| (p.rho00.clone(), p.rho01.clone())))
        }
    };
    let gamma = dmodel.gamma(cfg.g);
    let mut rows = Vec::with_capacity(stats.len());
    for (&tau, (rho00, rho01, ratio)) in cfg.tau_snapshots.iter().zip(stats) {
        let lindblad = lindblad_solution(&initial, gamma, tau / cfg.g, dmodel)?;
        let mean_state = QubitState::from_parts(rho00, rho01);
        let max_deviation = (mean_state.rho00() - lindblad.rho00()).abs().max((mean_state.rho01() - lindblad.rho01()).norm());
        rows.push(DecoherenceRow {
            tau,
            mean_state,
            lindblad,
            coherence_ratio: ratio.mean(),
            expected_ratio: (-rate * tau).exp(),
            max_deviation,
        });
    }
    Ok(DecoherenceReport { model: cfg.model, x, rows })
}

fn reduce_states(
    cfg: &EnsembleConfig,
    initial: QubitState,
    paths: impl Iterator<Item = (Vec<f64>, Vec<Complex64>)>,
) -> Vec<(f64, Complex64, Moments)> {
    let m = cfg.tau_snapshots.len();
    let mut acc = vec![(0.0, Complex64::new(0.0, 0.0), Moments::default()); m];
    let mut n = 0usize;
    for (rho00, rho01) in paths {
        n += 1;
        for s in 0..m {
            acc[s].0 += rho00[s];
            acc[s].1 += rho01[s];
            acc[s].2.push(ratio_to(rho01[s], initial.rho01()));
        }
    }
    let nf = n as f64;
    acc.into_iter().map(|(a, b, c)| (a / nf, b / nf, c)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(model: Model) -> EnsembleConfig {
        EnsembleConfig { model, n_traj: 200, x_grid: vec![0.3, 0.7], dt: 1e-2, ..Default::default() }
    }

    #[test]
    fn config_validation() {
        assert!(EnsembleConfig::default().validate().is_ok());
        assert!(EnsembleConfig { n_traj: 0, ..Default::default() }.validate().is_err());
        assert!(EnsembleConfig { x_grid: vec![1.5], ..Default::default() }.validate().is_err());
        assert!(EnsembleConfig { tau_snapshots: vec![3.0, 1.0], ..Default::default() }.validate().is_err());
        assert!(EnsembleConfig { tau_snapshots: vec![30.0], ..Default::default() }.validate().is_err());
    }

    #[test]
    fn config_json_round_trip() {
        let cfg = EnsembleConfig { model: Model::Jump, tau_snapshots: vec![1.0], ..Default::default() };
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<EnsembleConfig>(&text).unwrap(), cfg);
        let partial: EnsembleConfig = serde_json::from_str(r#"{"n_traj": 10, "scheme": "ito"}"#).unwrap();
        assert_eq!(partial.n_traj, 10);
        assert_eq!(partial.scheme, Scheme::Ito);
        assert_eq!(partial.seed, 42);
    }

    #[test]
    fn histogram_binning() {
        let mut h = Histogram::new(-1.0, 1.0, 4);
        for v in [-2.0, -1.0, -0.6, 0.0, 0.49, 0.5, 0.99, 1.0] {
            h.add(v);
        }
        assert_eq!(h.counts, vec![2, 0, 2, 2]);
        assert_eq!((h.underflow, h.overflow), (1, 1));
        assert_eq!(h.total(), 8);
        assert_eq!(h.edges().len(), 5);
    }

    #[test]
    fn moments_of_known_data() {
        let mut m = Moments::default();
        for v in [1.0, 2.0, 3.0, 4.0] {
            m.push(v);
        }
        assert_eq!(m.mean().value, 2.5);
        assert!((m.variance().value - 5.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn fixed_points_are_certain() {
        let cfg = EnsembleConfig { n_traj: 50, x_grid: vec![0.0, 1.0], dt: 1e-2, ..Default::default() };
        for model in [Model::Diffusion, Model::Jump, Model::BiasedWalk] {
            let curve = born_curve(&EnsembleConfig { model, ..cfg.clone() }).unwrap();
            assert_eq!(curve.points[0].p_hat, 0.0);
            assert_eq!(curve.points[1].p_hat, 1.0);
            assert_eq!(curve.points[0].std_err, 0.0);
        }
    }

    #[test]
    fn noise_free_curve_is_a_step() {
        let cfg = EnsembleConfig { gsxi: 0.0, ..small(Model::Diffusion) };
        let curve = born_curve(&cfg).unwrap();
        assert_eq!(curve.points[0].p_hat, 0.0);
        assert_eq!(curve.points[1].p_hat, 1.0);
        assert!(!curve.flagged);
    }

    #[test]
    fn symmetric_noise_free_point_is_flagged() {
        let cfg = EnsembleConfig { gsxi: 0.0, x_grid: vec![0.5], max_tau: 2.0, ..small(Model::Diffusion) };
        let curve = born_curve(&cfg).unwrap();
        assert!(curve.flagged);
        assert_eq!(curve.points[0].n_unabsorbed(), cfg.n_traj);
    }

    #[test]
    fn results_independent_of_worker_count() {
        let base = EnsembleConfig { tau_snapshots: vec![0.5, 1.0], phase: 0.4, ..small(Model::Diffusion) };
        let one = distribution_snapshots(&EnsembleConfig { threads: 1, ..base.clone() }).unwrap();
        let many = distribution_snapshots(&EnsembleConfig { threads: 3, ..base.clone() }).unwrap();
        assert_eq!(one, many);
        let j = EnsembleConfig { model: Model::Jump, ..base };
        assert_eq!(
            jump_ensemble(&EnsembleConfig { threads: 1, ..j.clone() }).unwrap(),
            jump_ensemble(&EnsembleConfig { threads: 2, ..j }).unwrap()
        );
    }

    #[test]
    fn jump_snapshot_at_zero() {
        let cfg = EnsembleConfig { tau_snapshots: vec![0.0], ..small(Model::Jump) };
        let r = jump_ensemble(&cfg).unwrap();
        let s = r[0].snapshots[0];
        assert_eq!(s.moving_weight.value, 1.0);
        assert_eq!(s.stationary_weight.value, 0.0);
        assert!((s.moving_position.value - 0.3).abs() < 1e-14);
    }

    #[test]
    fn decoherence_at_zero_is_exact() {
        for model in [Model::Diffusion, Model::Jump] {
            let cfg = EnsembleConfig { tau_snapshots: vec![0.0], phase: 1.1, ..small(model) };
            let rep = decoherence_comparison(&cfg).unwrap();
            assert!(rep.rows[0].max_deviation < 1e-14);
            assert!((rep.rows[0].coherence_ratio.value - 1.0).abs() < 1e-14);
        }
        let diag = EnsembleConfig { x_grid: vec![1.0], tau_snapshots: vec![0.0], ..small(Model::Diffusion) };
        assert!(decoherence_comparison(&diag).is_err());
    }

    #[test]
    fn distribution_rejects_boundary_x() {
        let cfg = EnsembleConfig { x_grid: vec![0.0], tau_snapshots: vec![1.0], ..small(Model::Diffusion) };
        assert!(matches!(distribution_snapshots(&cfg), Err(Error::Degenerate { .. })));
    }

    #[test]
    fn walk_epsilon_advances_tau_by_g_dt() {
        let eps = walk_epsilon(1e-3);
        assert!((2.0 * eps.cosh().ln() - 1e-3).abs() < 1e-15);
    }
}
