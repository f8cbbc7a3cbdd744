//! Binary quantum jump: smooth geodesic drift toward eigenstate 0, interrupted
//! by shot-noise jumps onto eigenstate 1.
//!
//! Between jumps the drift `d rho00 = 2g rho00 rho11 dt` is advanced with its
//! closed-form logistic solution. The jump hazard `lambda 2g rho11` is
//! integrated exactly along that drift, which gives the per-step jump
//! probability `1 - (rho00 + rho11 e^{-2g dt})^lambda`. `lambda = 1` is the
//! Born-rule rate; other values break the Born rule on purpose.

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::noise::{substream, TrajectoryRng};
use crate::record::{Recorder, TrajectoryRecord};
use crate::state::{qubit_offdiag, QubitState, ABSORB_EPS};

/// Largest accepted jump probability per step.
pub const MAX_STEP_PROBABILITY: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpParams {
    pub g: f64,
    pub dt: f64,
    /// Multiplier `lambda` on the Born jump rate `2 g rho11`.
    pub rate_multiplier: f64,
    pub seed: u64,
    pub stream_id: u64,
    pub max_tau: f64,
    pub absorb_eps: f64,
    pub record_stride: u64,
}

impl Default for JumpParams {
    fn default() -> Self {
        Self {
            g: 1.0,
            dt: 1e-3,
            rate_multiplier: 1.0,
            seed: 42,
            stream_id: 0,
            max_tau: 25.0,
            absorb_eps: ABSORB_EPS,
            record_stride: 0,
        }
    }
}

impl JumpParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.g > 0.0 && self.g.is_finite()) {
            return Err(Error::InvalidParameter(format!("g must be positive, got {}", self.g)));
        }
        if !(self.dt > 0.0) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.rate_multiplier >= 0.0 && self.rate_multiplier.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "rate multiplier must be >= 0, got {}",
                self.rate_multiplier
            )));
        }
        let worst = self.rate_multiplier * 2.0 * self.g * self.dt;
        if worst > MAX_STEP_PROBABILITY {
            return Err(Error::InvalidParameter(format!(
                "jump probability per step {worst} exceeds {MAX_STEP_PROBABILITY}; reduce dt"
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

    pub fn with_stream(self, stream_id: u64) -> Self {
        Self { stream_id, ..self }
    }

    pub fn g_dt(&self) -> f64 {
        self.g * self.dt
    }

    pub fn steps_for_tau(&self, tau: f64) -> u64 {
        (tau / self.g_dt()).round().max(0.0) as u64
    }

    pub fn max_steps(&self) -> u64 {
        self.steps_for_tau(self.max_tau)
    }

    pub fn rng(&self) -> TrajectoryRng {
        substream(self.seed, self.stream_id)
    }
}

/// Position of the no-jump branch after evolution parameter `tau`:
/// `x / (x + (1 - x) e^{-2 tau})`.
pub fn no_jump_position(x: f64, tau: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    x / (x + (1.0 - x) * (-2.0 * tau).exp())
}

/// Probability of a jump during one step of length `g dt` starting at `rho00`.
pub fn jump_probability(rho00: f64, g_dt: f64, rate_multiplier: f64) -> f64 {
    let q = (1.0 - rho00) * -(-2.0 * g_dt).exp_m1();
    if rate_multiplier == 1.0 {
        q
    } else {
        -(rate_multiplier * (-q).ln_1p()).exp_m1()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpStepped {
    pub state: QubitState,
    pub jumped: bool,
    pub absorbed: Option<usize>,
}

/// One step given a uniform draw `u` in `[0, 1)`: jump iff `u < p_jump`.
pub fn apply_jump_step(
    state: &QubitState,
    u: f64,
    g_dt: f64,
    rate_multiplier: f64,
    absorb_eps: f64,
) -> JumpStepped {
    if let Some(i) = state.nearest_fixed_point(0.0) {
        return JumpStepped { state: *state, jumped: false, absorbed: Some(i) };
    }
    let p = jump_probability(state.rho00(), g_dt, rate_multiplier);
    if u < p {
        return JumpStepped { state: QubitState::basis(1).expect("qubit index"), jumped: true, absorbed: Some(1) };
    }
    let e = (-2.0 * g_dt).exp();
    let (rho00, rho11) = (state.rho00(), state.rho11());
    let denom = rho00 + rho11 * e;
    let next00 = rho00 / denom;
    let next = QubitState::from_parts(next00, qubit_offdiag(state.rho01(), rho00, next00));
    let (state, absorbed) = next.snapped(absorb_eps);
    JumpStepped { state, jumped: false, absorbed }
}

pub fn jump_step<R: Rng + ?Sized>(state: &QubitState, params: &JumpParams, rng: &mut R) -> Result<JumpStepped> {
    params.validate()?;
    if let Some(i) = state.nearest_fixed_point(0.0) {
        return Ok(JumpStepped { state: *state, jumped: false, absorbed: Some(i) });
    }
    let u: f64 = rng.random();
    Ok(apply_jump_step(state, u, params.g_dt(), params.rate_multiplier, params.absorb_eps))
}

/// Incremental jump-trajectory integrator. Tracks `rho11` separately so the
/// approach to `rho00 = 1` keeps full relative precision.
#[derive(Debug, Clone)]
pub struct JumpPropagator {
    params: JumpParams,
    rng: TrajectoryRng,
    rho00_0: f64,
    rho01_0: Complex64,
    rho00: f64,
    rho11: f64,
    decay: f64,
    one_minus_decay: f64,
    steps: u64,
    outcome: Option<usize>,
    jump_step: Option<u64>,
}

impl JumpPropagator {
    pub fn new(initial: &QubitState, params: &JumpParams) -> Result<Self> {
        params.validate()?;
        let g_dt = params.g_dt();
        let mut p = Self {
            params: *params,
            rng: params.rng(),
            rho00_0: initial.rho00(),
            rho01_0: initial.rho01(),
            rho00: initial.rho00(),
            rho11: initial.rho11(),
            decay: (-2.0 * g_dt).exp(),
            one_minus_decay: -(-2.0 * g_dt).exp_m1(),
            steps: 0,
            outcome: initial.nearest_fixed_point(0.0),
            jump_step: None,
        };
        if p.outcome.is_none() {
            p.check_absorbed();
        }
        Ok(p)
    }

    /// Changes the absorption threshold on `rho11` mid-run (0 disables it).
    pub fn set_absorb_eps(&mut self, eps: f64) {
        self.params.absorb_eps = eps;
        if self.outcome.is_none() {
            self.check_absorbed();
        }
    }

    fn check_absorbed(&mut self) {
        let eps = self.params.absorb_eps;
        if eps > 0.0 && self.rho11 <= eps {
            self.outcome = Some(0);
            self.rho00 = 1.0;
            self.rho11 = 0.0;
        }
    }

    #[inline]
    pub fn step(&mut self) {
        if self.outcome.is_some() {
            return;
        }
        self.steps += 1;
        let q = self.rho11 * self.one_minus_decay;
        let lambda = self.params.rate_multiplier;
        let p = if lambda == 1.0 { q } else { -(lambda * (-q).ln_1p()).exp_m1() };
        let u: f64 = self.rng.random();
        if u < p {
            self.outcome = Some(1);
            self.jump_step = Some(self.steps);
            self.rho00 = 0.0;
            self.rho11 = 1.0;
            return;
        }
        let denom = self.rho00 + self.rho11 * self.decay;
        self.rho00 /= denom;
        self.rho11 = self.rho11 * self.decay / denom;
        self.check_absorbed();
    }

    pub fn advance_to_tau(&mut self, tau: f64) {
        let target = self.params.steps_for_tau(tau).min(self.params.max_steps());
        while self.steps < target && self.outcome.is_none() {
            self.step();
        }
    }

    pub fn run_to_absorption(&mut self) -> Option<usize> {
        let max_steps = self.params.max_steps();
        while self.outcome.is_none() && self.steps < max_steps {
            self.step();
        }
        self.outcome
    }

    pub fn outcome(&self) -> Option<usize> {
        self.outcome
    }

    pub fn jumped(&self) -> bool {
        self.jump_step.is_some()
    }

    /// Evolution parameter at the end of the step in which the jump happened.
    pub fn jump_tau(&self) -> Option<f64> {
        self.jump_step.map(|s| s as f64 * self.params.g_dt())
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

    pub fn state(&self) -> QubitState {
        if let Some(i) = self.outcome {
            return QubitState::basis(i).expect("qubit index");
        }
        let denom = self.rho00_0 * (1.0 - self.rho00_0);
        let rho01 = if denom > 0.0 {
            self.rho01_0 * (self.rho00 * self.rho11 / denom).sqrt()
        } else {
            Complex64::new(0.0, 0.0)
        };
        QubitState::from_parts(self.rho00, rho01)
    }
}

pub fn simulate_jump_trajectory(initial: &QubitState, params: &JumpParams) -> Result<TrajectoryRecord> {
    let mut prop = JumpPropagator::new(initial, params)?;
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
        jump_tau: prop.jump_tau(),
    })
}

/// `n` one-step increments `d rho00` from the fixed state `state`, for the
/// fluctuation-dissipation check.
pub fn increment_samples(state: &QubitState, params: &JumpParams, n: usize) -> Result<Vec<f64>> {
    params.validate()?;
    let mut rng = params.rng();
    let rho00 = state.rho00();
    (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            let next = apply_jump_step(state, u, params.g_dt(), params.rate_multiplier, 0.0);
            Ok(next.state.rho00() - rho00)
        })
        .collect()
}
