//! Quantum diffusion: geodesic attraction driven by white-noise trajectory
//! weights `w0 - w1 = rho00 - rho11 + sqrt(S_xi) xi`.
//!
//! Three steppers are provided for the qubit:
//!
//! * [`Scheme::Integrated`] multiplies `rho00 / rho11` by `exp(2 g dt wbar)`,
//!   where `wbar` is the step average of `w0 - w1`. In `z = atanh(rho00 -
//!   rho11)` this is an additive update, so the state never leaves `(0, 1)`.
//! * [`Scheme::Ito`] applies the forward increment
//!   `2g rho00 rho11 (rho00 - rho11)(1 - g S_xi) dt + 2g sqrt(S_xi) rho00 rho11 dW`.
//! * [`Scheme::StratonovichHeun`] integrates the Stratonovich form with a
//!   Heun predictor/corrector.
//!
//! `g S_xi = 1` makes `rho00` a martingale. The library never fixes that
//! value: it is just one point of the `g S_xi` sweep.
//!
//! For `n > 2` levels the weights come from the Cartan-generator noise
//! construction ([`multidim_weights`]) and the diagonal is advanced by the
//! n-level analogue of the integrated scheme, `d_j <- d_j exp(2 g dt wbar_j)`
//! followed by renormalisation. That finite-step form is our own
//! construction; in the continuum limit it reduces to the Stratonovich
//! equation for the diagonal.
//!
//! A trajectory ends once it comes within `absorb_eps` of a fixed point. At
//! large `g S_xi` a hard stop there would bias the outcome, since the noise
//! can still carry the state back across. [`DiffusionPropagator`] therefore
//! draws a return test on reaching the threshold: with the exact probability
//! that the drifting walk ever falls back one unit of `z`, the trajectory is
//! restarted from that level; otherwise it is absorbed. At `g S_xi = 0` the
//! test never fires.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{substream, NoiseFamily, TrajectoryRng};
use crate::record::{Recorder, TrajectoryRecord};
use crate::state::{
    qubit_offdiag, rho00_from_z, sech_ratio, DiagonalWeights, QubitState, TrajectoryWeights,
    ZCoordinate, ABSORB_EPS, Z_MAX,
};

/// Default `g dt`.
pub const DEFAULT_G_DT: f64 = 1e-3;
/// Largest accepted `g dt`.
pub const MAX_G_DT: f64 = 0.1;
/// Default evolution-parameter budget.
pub const DEFAULT_MAX_TAU: f64 = 25.0;

/// Noise driving one trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub family: NoiseFamily,
    /// Spectral density `S_xi` (units of time).
    pub s_xi: f64,
    pub seed: u64,
    pub stream_id: u64,
}

impl NoiseSpec {
    pub fn new(family: NoiseFamily, s_xi: f64, seed: u64, stream_id: u64) -> Result<Self> {
        if !(s_xi >= 0.0 && s_xi.is_finite()) {
            return Err(Error::InvalidParameter(format!("S_xi must be >= 0, got {s_xi}")));
        }
        Ok(Self { family, s_xi, seed, stream_id })
    }

    /// Noise with the dimensionless strength `g S_xi = gsxi`.
    pub fn from_gsxi(family: NoiseFamily, gsxi: f64, g: f64, seed: u64) -> Result<Self> {
        if !(g > 0.0) {
            return Err(Error::InvalidParameter(format!("g must be positive, got {g}")));
        }
        Self::new(family, gsxi / g, seed, 0)
    }

    /// Gaussian noise on the Born point `g S_xi = 1`.
    pub fn born(g: f64, seed: u64) -> Result<Self> {
        Self::from_gsxi(NoiseFamily::Gaussian, 1.0, g, seed)
    }

    pub fn with_stream(self, stream_id: u64) -> Self {
        Self { stream_id, ..self }
    }

    pub fn gsxi(&self, g: f64) -> f64 {
        g * self.s_xi
    }

    pub fn rng(&self) -> TrajectoryRng {
        substream(self.seed, self.stream_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    Integrated,
    Ito,
    StratonovichHeun,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Integrated => "integrated",
            Scheme::Ito => "ito",
            Scheme::StratonovichHeun => "stratonovich_heun",
        })
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "integrated" => Ok(Scheme::Integrated),
            "ito" => Ok(Scheme::Ito),
            "stratonovich_heun" | "stratonovich" | "heun" => Ok(Scheme::StratonovichHeun),
            other => Err(format!(
                "unknown scheme '{other}' (expected integrated, ito or stratonovich_heun)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffusionParams {
    /// Coupling, 1/time.
    pub g: f64,
    pub dt: f64,
    pub scheme: Scheme,
    /// Evolution-parameter budget `tau = g t`.
    pub max_tau: f64,
    /// Snap-and-stop threshold. Zero disables absorption.
    pub absorb_eps: f64,
    /// Record every `record_stride` steps; 0 keeps only the endpoints.
    pub record_stride: u64,
}

impl Default for DiffusionParams {
    fn default() -> Self {
        Self {
            g: 1.0,
            dt: DEFAULT_G_DT,
            scheme: Scheme::Integrated,
            max_tau: DEFAULT_MAX_TAU,
            absorb_eps: ABSORB_EPS,
            record_stride: 0,
        }
    }
}

impl DiffusionParams {
    pub fn new(g: f64, dt: f64, scheme: Scheme, max_tau: f64) -> Result<Self> {
        let p = Self { g, dt, scheme, max_tau, ..Self::default() };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.g > 0.0 && self.g.is_finite()) {
            return Err(Error::InvalidParameter(format!("g must be positive, got {}", self.g)));
        }
        if !(self.dt > 0.0) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {}", self.dt)));
        }
        if self.g * self.dt > MAX_G_DT {
            return Err(Error::InvalidParameter(format!(
                "g*dt = {} exceeds {MAX_G_DT}",
                self.g * self.dt
            )));
        }
        if !(self.max_tau >= 0.0) {
            return Err(Error::InvalidParameter(format!("max_tau must be >= 0, got {}", self.max_tau)));
        }
        if !(0.0..0.5).contains(&self.absorb_eps) {
            return Err(Error::InvalidParameter(format!(
                "absorb_eps must lie in [0, 0.5), got {}",
                self.absorb_eps
            )));
        }
        Ok(())
    }

    pub fn g_dt(&self) -> f64 {
        self.g * self.dt
    }

    /// Number of steps that covers `tau`.
    pub fn steps_for_tau(&self, tau: f64) -> u64 {
        (tau / self.g_dt()).round().max(0.0) as u64
    }

    pub fn max_steps(&self) -> u64 {
        self.steps_for_tau(self.max_tau)
    }
}

/// Result of a single step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stepped {
    pub state: QubitState,
    /// Set when the step landed within the absorption threshold of a fixed
    /// point; the state has then been snapped onto it.
    pub absorbed: Option<usize>,
}

impl Stepped {
    fn settle(state: QubitState, eps: f64) -> Self {
        let (state, absorbed) = state.snapped(eps);
        Self { state, absorbed }
    }
}

/// Draws the step-averaged weight difference `wbar = w0 - w1`: mean
/// `rho00 - rho11`, variance `S_xi / dt`.
pub fn sample_wbar<R: Rng + ?Sized>(
    state: &QubitState,
    spec: &NoiseSpec,
    dt: f64,
    rng: &mut R,
) -> Result<f64> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    let mean = state.polarization();
    if spec.s_xi == 0.0 {
        return Ok(mean);
    }
    Ok(mean + (spec.s_xi / dt).sqrt() * spec.family.unit_draw(rng))
}

/// One integrated step with a given `wbar`:
/// `rho00/rho11 <- rho00/rho11 * exp(2 g dt wbar)`.
pub fn apply_integrated(state: &QubitState, wbar: f64, g_dt: f64, absorb_eps: f64) -> Stepped {
    if let Some(i) = state.nearest_fixed_point(0.0) {
        return Stepped { state: *state, absorbed: Some(i) };
    }
    let z = 0.5 * (state.rho00() / state.rho11()).ln();
    let z_new = z + g_dt * wbar;
    if z_new.abs() >= Z_MAX {
        let i = if z_new > 0.0 { 0 } else { 1 };
        return Stepped { state: QubitState::basis(i).expect("qubit index"), absorbed: Some(i) };
    }
    let next = QubitState::from_parts(rho00_from_z(z_new), state.rho01() * sech_ratio(z_new, z));
    Stepped::settle(next, absorb_eps)
}

pub fn step_integrated<R: Rng + ?Sized>(
    state: &QubitState,
    spec: &NoiseSpec,
    params: &DiffusionParams,
    rng: &mut R,
) -> Result<Stepped> {
    params.validate()?;
    if let Some(i) = state.nearest_fixed_point(0.0) {
        return Ok(Stepped { state: *state, absorbed: Some(i) });
    }
    let wbar = sample_wbar(state, spec, params.dt, rng)?;
    Ok(apply_integrated(state, wbar, params.g_dt(), params.absorb_eps))
}

/// Forward Ito increment of `rho00` for a Wiener increment `dw`.
#[inline]
pub fn ito_increment(rho00: f64, dw: f64, g: f64, s_xi: f64, dt: f64) -> f64 {
    let rho11 = 1.0 - rho00;
    let pq = rho00 * rho11;
    let drift = 2.0 * g * pq * (rho00 - rho11) * (1.0 - g * s_xi) * dt;
    drift + 2.0 * g * s_xi.sqrt() * pq * dw
}

/// One Ito step with a given Wiener increment; the result is clamped to
/// `[0, 1]` and a clamped state counts as absorbed.
pub fn apply_ito(state: &QubitState, dw: f64, g: f64, s_xi: f64, dt: f64, absorb_eps: f64) -> Stepped {
    let rho00 = state.rho00();
    let next = rho00 + ito_increment(rho00, dw, g, s_xi, dt);
    finish_rho00_step(state, next, absorb_eps)
}

pub fn step_ito<R: Rng + ?Sized>(
    state: &QubitState,
    spec: &NoiseSpec,
    params: &DiffusionParams,
    rng: &mut R,
) -> Result<Stepped> {
    params.validate()?;
    if let Some(i) = state.nearest_fixed_point(0.0) {
        return Ok(Stepped { state: *state, absorbed: Some(i) });
    }
    let dw = params.dt.sqrt() * spec.family.unit_draw(rng);
    Ok(apply_ito(state, dw, params.g, spec.s_xi, params.dt, params.absorb_eps))
}

/// Heun step of the Stratonovich equation
/// `d rho00 = 2g (rho00 - rho11) rho00 rho11 dt + 2g sqrt(S_xi) rho00 rho11 o dW`.
pub fn apply_heun(state: &QubitState, dw: f64, g: f64, s_xi: f64, dt: f64, absorb_eps: f64) -> Stepped {
    let rho00 = state.rho00();
    let next = heun_rho00(rho00, dw, g, s_xi.sqrt(), dt);
    finish_rho00_step(state, next, absorb_eps)
}

#[inline]
fn heun_rho00(rho00: f64, dw: f64, g: f64, sqrt_s: f64, dt: f64) -> f64 {
    let drift = |r: f64| 2.0 * g * r * (1.0 - r) * (2.0 * r - 1.0);
    let vol = |r: f64| 2.0 * g * sqrt_s * r * (1.0 - r);
    let pred = (rho00 + drift(rho00) * dt + vol(rho00) * dw).clamp(0.0, 1.0);
    rho00 + 0.5 * (drift(rho00) + drift(pred)) * dt + 0.5 * (vol(rho00) + vol(pred)) * dw
}

pub fn step_stratonovich_heun<R: Rng + ?Sized>(
    state: &QubitState,
    spec: &NoiseSpec,
    params: &DiffusionParams,
    rng: &mut R,
) -> Result<Stepped> {
    params.validate()?;
    if let Some(i) = state.nearest_fixed_point(0.0) {
        return Ok(Stepped { state: *state, absorbed: Some(i) });
    }
    let dw = params.dt.sqrt() * spec.family.unit_draw(rng);
    Ok(apply_heun(state, dw, params.g, spec.s_xi, params.dt, params.absorb_eps))
}

fn finish_rho00_step(state: &QubitState, next: f64, absorb_eps: f64) -> Stepped {
    if next >= 1.0 || next <= 0.0 {
        let i = if next >= 1.0 { 0 } else { 1 };
        return Stepped { state: QubitState::basis(i).expect("qubit index"), absorbed: Some(i) };
    }
    let rho01 = qubit_offdiag(state.rho01(), state.rho00(), next);
    Stepped::settle(QubitState::from_parts(next, rho01), absorb_eps)
}

/// Steps with whichever scheme `params` selects.
pub fn step<R: Rng + ?Sized>(
    state: &QubitState,
    spec: &NoiseSpec,
    params: &DiffusionParams,
    rng: &mut R,
) -> Result<Stepped> {
    match params.scheme {
        Scheme::Integrated => step_integrated(state, spec, params, rng),
        Scheme::Ito => step_ito(state, spec, params, rng),
        Scheme::StratonovichHeun => step_stratonovich_heun(state, spec, params, rng),
    }
}

/// `dz = g tanh(z) dt + sqrt(g) dW`.
#[inline]
pub fn z_increment(z: f64, dw: f64, g: f64, dt: f64) -> f64 {
    g * z.tanh() * dt + g.sqrt() * dw
}

/// Tolerance on `g S_xi = 1` for the z-form.
const BORN_TOL: f64 = 1e-9;

/// One step of the z-form. Only valid on the Born point.
pub fn step_z<R: Rng + ?Sized>(
    zc: &ZCoordinate,
    spec: &NoiseSpec,
    params: &DiffusionParams,
    rng: &mut R,
) -> Result<ZCoordinate> {
    let gsxi = spec.gsxi(params.g);
    if (gsxi - 1.0).abs() > BORN_TOL {
        return Err(Error::BornConstraintRequired { gsxi });
    }
    params.validate()?;
    let dw = params.dt.sqrt() * spec.family.unit_draw(rng);
    Ok(zc.with_z(zc.z() + z_increment(zc.z(), dw, params.g, params.dt)))
}

/// Weights from explicit noise values `xi_k` (k = 1..n-1), solving
/// `sum_{i<k} w_i - k w_k = sum_{i<k} d_i - k d_k + sqrt(k(k+1) S_xi / 2) xi_k`
/// together with `sum_i w_i = 1`.
pub fn multidim_weights_from_noise(d: &DiagonalWeights, s_xi: f64, xi: &[f64]) -> Result<TrajectoryWeights> {
    let n = d.len();
    if xi.len() != n - 1 {
        return Err(Error::DimensionMismatch { expected: n - 1, got: xi.len() });
    }
    let mut w = d.as_slice().to_vec();
    add_cartan_noise(&mut w, s_xi, xi);
    Ok(TrajectoryWeights::from_vec_unchecked(w))
}

/// The constraint rows `(1, .., 1, -k, 0, ..)` are mutually orthogonal and
/// orthogonal to `(1, .., 1)`, so the noise part is
/// `nu = sum_k c_k v_k / (k (k+1))` with `c_k` the right-hand noise term.
#[inline]
fn add_cartan_noise(w: &mut [f64], s_xi: f64, xi: &[f64]) {
    let n = w.len();
    let mut suffix = 0.0;
    for k in (1..n).rev() {
        let kf = k as f64;
        let a = (s_xi / (2.0 * kf * (kf + 1.0))).sqrt() * xi[k - 1];
        w[k] += suffix - kf * a;
        suffix += a;
    }
    w[0] += suffix;
}

/// Draws `n-1` independent white-noise values of variance `1/dt` and builds
/// the corresponding trajectory weights.
pub fn multidim_weights<R: Rng + ?Sized>(
    d: &DiagonalWeights,
    spec: &NoiseSpec,
    dt: f64,
    rng: &mut R,
) -> Result<TrajectoryWeights> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    let scale = dt.sqrt().recip();
    let xi: Vec<f64> = (1..d.len()).map(|_| scale * spec.family.unit_draw(rng)).collect();
    multidim_weights_from_noise(d, spec.s_xi, &xi)
}

/// One integrated n-level step: `d_j <- d_j exp(2 g dt wbar_j)`, renormalised.
pub fn step_multilevel<R: Rng + ?Sized>(
    d: &DiagonalWeights,
    spec: &NoiseSpec,
    params: &DiffusionParams,
    rng: &mut R,
) -> Result<(DiagonalWeights, Option<usize>)> {
    params.validate()?;
    let mut ml = MultilevelState::new(d);
    let mut xi = vec![0.0; d.len() - 1];
    let outcome = ml.step(spec, params, rng, &mut xi);
    Ok((DiagonalWeights::from_vec_unchecked(ml.d), outcome))
}

/// Log-space n-level state.
struct MultilevelState {
    log_d: Vec<f64>,
    d: Vec<f64>,
    w: Vec<f64>,
}

impl MultilevelState {
    fn new(d: &DiagonalWeights) -> Self {
        Self {
            log_d: d.as_slice().iter().map(|v| v.ln()).collect(),
            d: d.as_slice().to_vec(),
            w: vec![0.0; d.len()],
        }
    }

    fn absorbed(&self, eps: f64) -> Option<usize> {
        let (imax, _) = self
            .d
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
        let rest: f64 = self.d.iter().enumerate().filter(|(i, _)| *i != imax).map(|(_, v)| v).sum();
        (rest <= eps).then_some(imax)
    }

    fn step<R: Rng + ?Sized>(
        &mut self,
        spec: &NoiseSpec,
        params: &DiffusionParams,
        rng: &mut R,
        xi: &mut [f64],
    ) -> Option<usize> {
        if let Some(i) = self.absorbed(0.0) {
            return Some(i);
        }
        let scale = params.dt.sqrt().recip();
        for v in xi.iter_mut() {
            *v = scale * spec.family.unit_draw(rng);
        }
        self.w.copy_from_slice(&self.d);
        add_cartan_noise(&mut self.w, spec.s_xi, xi);
        let two_g_dt = 2.0 * params.g_dt();
        for (y, wj) in self.log_d.iter_mut().zip(&self.w) {
            *y += two_g_dt * wj;
        }
        let ymax = self.log_d.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for (y, dj) in self.log_d.iter_mut().zip(self.d.iter_mut()) {
            *y -= ymax;
            *dj = y.exp();
            total += *dj;
        }
        // `log_d` only needs to stay bounded; keeping the largest entry at 0
        // is enough.
        let inv = total.recip();
        self.d.iter_mut().for_each(|dj| *dj *= inv);
        let outcome = self.absorbed(params.absorb_eps);
        if let Some(i) = outcome {
            self.d.iter_mut().for_each(|v| *v = 0.0);
            self.d[i] = 1.0;
            self.log_d = self.d.iter().map(|v| v.ln()).collect();
        }
        outcome
    }
}

/// Outcome of an n-level trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct MultilevelRecord {
    pub samples: Vec<(f64, DiagonalWeights)>,
    pub outcome: Option<usize>,
    pub final_weights: DiagonalWeights,
    pub final_tau: f64,
    pub steps: u64,
}

pub fn simulate_multilevel(
    initial: &DiagonalWeights,
    spec: &NoiseSpec,
    params: &DiffusionParams,
) -> Result<MultilevelRecord> {
    params.validate()?;
    let mut rng = spec.rng();
    let mut ml = MultilevelState::new(initial);
    let mut xi = vec![0.0; initial.len() - 1];
    let g_dt = params.g_dt();
    let max_steps = params.max_steps();
    let mut samples = vec![(0.0, initial.clone())];
    let mut outcome = ml.absorbed(params.absorb_eps);
    let mut steps = 0;
    while outcome.is_none() && steps < max_steps {
        outcome = ml.step(spec, params, &mut rng, &mut xi);
        steps += 1;
        if params.record_stride > 0 && steps % params.record_stride == 0 {
            samples.push((steps as f64 * g_dt, DiagonalWeights::from_vec_unchecked(ml.d.clone())));
        }
    }
    let final_weights = DiagonalWeights::from_vec_unchecked(ml.d);
    let final_tau = steps as f64 * g_dt;
    if samples.last().map(|(t, _)| *t) != Some(final_tau) {
        samples.push((final_tau, final_weights.clone()));
    }
    Ok(MultilevelRecord { samples, outcome, final_weights, final_tau, steps })
}

/// `tanh z` as `1 - 2 / (1 + e^{2z})`: one `exp` instead of the slower libm
/// `tanh`, accurate to a few ulp in absolute terms on `|z| <= Z_MAX`.
#[inline(always)]
fn tanh_z(z: f64) -> f64 {
    1.0 - 2.0 / (1.0 + (2.0 * z).exp())
}

/// Incremental qubit trajectory integrator.
///
/// The integrated scheme is carried in `z` so that states exponentially close
/// to a fixed point keep full relative precision; the off-diagonal is always
/// rebuilt from the initial reference rather than updated step by step.
#[derive(Debug, Clone)]
pub struct DiffusionPropagator {
    spec: NoiseSpec,
    params: DiffusionParams,
    rng: TrajectoryRng,
    rho00_0: f64,
    rho01_0: Complex64,
    z0: f64,
    z: f64,
    rho00: f64,
    steps: u64,
    outcome: Option<usize>,
    z_absorb: f64,
    z_back: f64,
    gsxi: f64,
    noise_amp: f64,
}

fn clamped_z(rho00: f64) -> f64 {
    if rho00 <= 0.0 {
        -Z_MAX
    } else if rho00 >= 1.0 {
        Z_MAX
    } else {
        (0.5 * (rho00 / (1.0 - rho00)).ln()).clamp(-Z_MAX, Z_MAX)
    }
}

/// Level a returning trajectory is restarted from: one unit of `z` below the
/// absorption threshold.
fn return_level(z_absorb: f64) -> f64 {
    (z_absorb - 1.0).max(0.5 * z_absorb)
}

/// Probability that a trajectory a distance `excess` above the return level
/// ever falls back to it. Past the threshold the drift is `+-1` to within
/// `2 e^{-2 z}`, so the walk is a Brownian motion with unit drift and
/// variance `g S_xi` per unit `tau`, whose return probability is
/// `exp(-2 excess / (g S_xi))`.
fn return_probability(excess: f64, gsxi: f64) -> f64 {
    if gsxi > 0.0 && excess.is_finite() {
        (-2.0 * excess.max(0.0) / gsxi).exp()
    } else {
        0.0
    }
}

fn z_threshold(eps: f64) -> f64 {
    if eps > 0.0 {
        0.5 * ((1.0 - eps) / eps).ln()
    } else {
        f64::INFINITY
    }
}

impl DiffusionPropagator {
    pub fn new(initial: &QubitState, spec: &NoiseSpec, params: &DiffusionParams) -> Result<Self> {
        params.validate()?;
        let rho00 = initial.rho00();
        let z = clamped_z(rho00);
        let noise_amp = match params.scheme {
            Scheme::Integrated => (spec.s_xi / params.dt).sqrt(),
            _ => params.dt.sqrt(),
        };
        let mut p = Self {
            spec: *spec,
            params: *params,
            rng: spec.rng(),
            rho00_0: rho00,
            rho01_0: initial.rho01(),
            z0: z,
            z,
            rho00,
            steps: 0,
            outcome: initial.nearest_fixed_point(0.0),
            z_absorb: z_threshold(params.absorb_eps),
            z_back: return_level(z_threshold(params.absorb_eps)),
            gsxi: spec.gsxi(params.g),
            noise_amp,
        };
        if p.outcome.is_none() {
            p.check_absorbed();
        }
        Ok(p)
    }

    /// Changes the absorption threshold mid-run (0 disables absorption).
    pub fn set_absorb_eps(&mut self, eps: f64) {
        self.params.absorb_eps = eps;
        self.z_absorb = z_threshold(eps);
        self.z_back = return_level(self.z_absorb);
        if self.outcome.is_none() {
            self.check_absorbed();
        }
    }

    fn check_absorbed(&mut self) {
        let outcome = match self.params.scheme {
            Scheme::Integrated => {
                if self.z >= self.z_absorb {
                    Some(0)
                } else if self.z <= -self.z_absorb {
                    Some(1)
                } else {
                    None
                }
            }
            _ => {
                let eps = self.params.absorb_eps;
                if self.rho00 >= 1.0 || (eps > 0.0 && 1.0 - self.rho00 <= eps) {
                    Some(0)
                } else if self.rho00 <= 0.0 || (eps > 0.0 && self.rho00 <= eps) {
                    Some(1)
                } else {
                    None
                }
            }
        };
        if let Some(i) = outcome {
            if self.returns(self.z().abs()) {
                let z = if i == 0 { self.z_back } else { -self.z_back };
                self.z = z;
                self.rho00 = rho00_from_z(z);
            } else {
                self.absorb(i);
            }
        }
    }

    /// Return test at the absorption threshold; consumes one uniform draw
    /// when the return probability is nonzero.
    fn returns(&mut self, z_abs: f64) -> bool {
        let q = return_probability(z_abs - self.z_back, self.gsxi);
        q > 0.0 && self.rng.random::<f64>() < q
    }

    fn absorb(&mut self, i: usize) {
        self.outcome = Some(i);
        self.rho00 = if i == 0 { 1.0 } else { 0.0 };
        self.z = if i == 0 { Z_MAX } else { -Z_MAX };
    }

    /// Advances one step; no-op once absorbed.
    #[inline]
    pub fn step(&mut self) {
        if self.outcome.is_some() {
            return;
        }
        self.steps += 1;
        let g = self.params.g;
        let dt = self.params.dt;
        match self.params.scheme {
            Scheme::Integrated => {
                let mut wbar = tanh_z(self.z);
                if self.spec.s_xi > 0.0 {
                    wbar += self.noise_amp * self.spec.family.unit_draw(&mut self.rng);
                }
                self.z = (self.z + g * dt * wbar).clamp(-Z_MAX, Z_MAX);
                self.rho00 = rho00_from_z(self.z);
            }
            Scheme::Ito => {
                let dw = self.noise_amp * self.spec.family.unit_draw(&mut self.rng);
                let r = self.rho00 + ito_increment(self.rho00, dw, g, self.spec.s_xi, dt);
                self.rho00 = r.clamp(0.0, 1.0);
            }
            Scheme::StratonovichHeun => {
                let dw = self.noise_amp * self.spec.family.unit_draw(&mut self.rng);
                let r = heun_rho00(self.rho00, dw, g, self.spec.s_xi.sqrt(), dt);
                self.rho00 = r.clamp(0.0, 1.0);
            }
        }
        self.check_absorbed();
    }

    /// Steps until `tau` is reached, the trajectory is absorbed, or the
    /// budget runs out.
    pub fn advance_to_tau(&mut self, tau: f64) {
        let target = self.params.steps_for_tau(tau).min(self.params.max_steps());
        self.run_until(target);
    }

    /// Steps until absorbed or out of budget; returns the outcome.
    pub fn run_to_absorption(&mut self) -> Option<usize> {
        self.run_until(self.params.max_steps());
        self.outcome
    }

    fn run_until(&mut self, target: u64) {
        if self.outcome.is_some() || self.steps >= target {
            return;
        }
        if self.params.scheme != Scheme::Integrated {
            while self.steps < target && self.outcome.is_none() {
                self.step();
            }
            return;
        }
        // Same arithmetic as `step`, with the state kept in registers.
        let g_dt = self.params.g * self.params.dt;
        let amp = if self.spec.s_xi > 0.0 { self.noise_amp } else { 0.0 };
        let family = self.spec.family;
        let hi = self.z_absorb;
        while self.outcome.is_none() && self.steps < target {
            let mut z = self.z;
            let mut steps = self.steps;
            while steps < target {
                steps += 1;
                let mut wbar = tanh_z(z);
                if amp > 0.0 {
                    wbar += amp * family.unit_draw(&mut self.rng);
                }
                z = (z + g_dt * wbar).clamp(-Z_MAX, Z_MAX);
                if z >= hi || z <= -hi {
                    break;
                }
            }
            self.z = z;
            self.steps = steps;
            self.rho00 = rho00_from_z(z);
            self.check_absorbed();
        }
    }

    pub fn outcome(&self) -> Option<usize> {
        self.outcome
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn tau(&self) -> f64 {
        self.steps as f64 * self.params.g_dt()
    }

    pub fn rho00(&self) -> f64 {
        self.rho00
    }

    /// Current collapse coordinate (clamped to `+-Z_MAX`).
    pub fn z(&self) -> f64 {
        match self.params.scheme {
            Scheme::Integrated => self.z,
            _ => clamped_z(self.rho00),
        }
    }

    pub fn state(&self) -> QubitState {
        if let Some(i) = self.outcome {
            return QubitState::basis(i).expect("qubit index");
        }
        let rho01 = match self.params.scheme {
            Scheme::Integrated => self.rho01_0 * sech_ratio(self.z, self.z0),
            _ => qubit_offdiag(self.rho01_0, self.rho00_0, self.rho00),
        };
        QubitState::from_parts(self.rho00, rho01)
    }
}

/// Trajectories advanced together by [`integrated_outcomes`].
const LANES: usize = 8;
const EMPTY: usize = usize::MAX;

/// Outcomes of independent trajectories started from `rho00 = x`, one per
/// entry of `streams` (used as the stream id of `spec`).
///
/// For the integrated scheme several trajectories are stepped in lockstep so
/// that their serial `exp` dependencies overlap; each one still performs
/// exactly the arithmetic of [`DiffusionPropagator::run_to_absorption`].
pub fn integrated_outcomes(
    x: f64,
    spec: &NoiseSpec,
    params: &DiffusionParams,
    streams: &[u64],
) -> Result<Vec<Option<usize>>> {
    params.validate()?;
    let initial = QubitState::diagonal(x)?;
    let probe = DiffusionPropagator::new(&initial, spec, params)?;
    let starts_inside = clamped_z(x).abs() < probe.z_absorb;
    if params.scheme != Scheme::Integrated || probe.outcome().is_some() || !starts_inside {
        return streams
            .iter()
            .map(|&sid| {
                let mut p = DiffusionPropagator::new(&initial, &spec.with_stream(sid), params)?;
                Ok(p.run_to_absorption())
            })
            .collect();
    }
    let g_dt = params.g * params.dt;
    let amp = if spec.s_xi > 0.0 { probe.noise_amp } else { 0.0 };
    let family = spec.family;
    let hi = probe.z_absorb;
    let z_back = probe.z_back;
    let gsxi = probe.gsxi;
    let max_steps = params.max_steps();
    let z0 = probe.z;

    let mut out = vec![None; streams.len()];
    let mut rngs: Vec<TrajectoryRng> = Vec::with_capacity(LANES);
    let mut z = [z0; LANES];
    let mut steps = [0u64; LANES];
    let mut idx = [EMPTY; LANES];
    let mut next = 0usize;
    for l in 0..LANES {
        rngs.push(spec.with_stream(streams.get(l).copied().unwrap_or(0)).rng());
        if next < streams.len() {
            idx[l] = next;
            next += 1;
        }
    }
    let mut live = idx.iter().filter(|&&i| i != EMPTY).count();
    if max_steps == 0 {
        return Ok(out);
    }
    while live > 0 {
        for l in 0..LANES {
            if idx[l] == EMPTY {
                continue;
            }
            let mut wbar = tanh_z(z[l]);
            if amp > 0.0 {
                wbar += amp * family.unit_draw(&mut rngs[l]);
            }
            z[l] = (z[l] + g_dt * wbar).clamp(-Z_MAX, Z_MAX);
            steps[l] += 1;
        }
        for l in 0..LANES {
            if idx[l] == EMPTY {
                continue;
            }
            let outcome = if z[l] >= hi || z[l] <= -hi {
                let q = return_probability(z[l].abs() - z_back, gsxi);
                if q > 0.0 && rngs[l].random::<f64>() < q {
                    z[l] = z_back.copysign(z[l]);
                    if steps[l] >= max_steps {
                        None
                    } else {
                        continue;
                    }
                } else if z[l] > 0.0 {
                    Some(0)
                } else {
                    Some(1)
                }
            } else if steps[l] >= max_steps {
                None
            } else {
                continue;
            };
            out[idx[l]] = outcome;
            if next < streams.len() {
                idx[l] = next;
                rngs[l] = spec.with_stream(streams[next]).rng();
                z[l] = z0;
                steps[l] = 0;
                next += 1;
            } else {
                idx[l] = EMPTY;
                live -= 1;
            }
        }
    }
    Ok(out)
}

/// Runs one trajectory until absorption or the `max_tau` budget.
pub fn simulate_trajectory(
    initial: &QubitState,
    spec: &NoiseSpec,
    params: &DiffusionParams,
) -> Result<TrajectoryRecord> {
    let mut prop = DiffusionPropagator::new(initial, spec, params)?;
    let mut rec = Recorder::new(params.record_stride, 0.0, prop.state());
    let max_steps = params.max_steps();
    while prop.outcome().is_none() && prop.steps() < max_steps {
        prop.step();
        if rec.wants(prop.steps()) {
            rec.push(prop.tau(), prop.state());
        }
    }
    let final_state = prop.state();
    let final_tau = prop.tau();
    Ok(TrajectoryRecord {
        samples: rec.finish(final_tau, final_state),
        outcome: prop.outcome(),
        final_state,
        final_tau,
        steps: prop.steps(),
        jump_tau: None,
    })
}

/// `n` one-step samples of `d rho00 - d rho11` from the fixed state `state`,
/// for the fluctuation-dissipation check.
pub fn increment_samples(
    state: &QubitState,
    spec: &NoiseSpec,
    params: &DiffusionParams,
    n: usize,
) -> Result<Vec<f64>> {
    let params = DiffusionParams { absorb_eps: 0.0, ..*params };
    let mut rng = spec.rng();
    let rho00 = state.rho00();
    (0..n)
        .map(|_| step(state, spec, &params, &mut rng).map(|st| 2.0 * (st.state.rho00() - rho00)))
        .collect()
}
