//! Closed-form ensemble results used as ground truth for the Monte Carlo
//! engine: the Gaussian-mixture solution of the Fokker-Planck equation in
//! `z`, the ensemble-averaged channels (Lindblad and Kraus forms), the biased
//! walk, the two-delta jump distribution and the fluctuation-dissipation
//! identities.

use nalgebra::Matrix2;
use num_complex::Complex64;
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::quadrature::integrate;
use crate::state::{QubitState, ZCoordinate};

const QUAD_TOL: f64 = 1e-8;
const PEAK_HALF_WIDTH: f64 = 8.0;

/// Trajectory density in `z` for the diffusion model on the Born point,
/// started from `rho00 = x`: two Gaussians with centres
/// `atanh(2x - 1) +- tau`, common variance `tau` and weights `x`, `1 - x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianMixture {
    x: f64,
    tau: f64,
    z0: f64,
}

impl GaussianMixture {
    pub fn new(x: f64, tau: f64) -> Result<Self> {
        if !(x > 0.0 && x < 1.0) {
            return Err(Error::Degenerate { x });
        }
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::InvalidParameter(format!("tau must be positive, got {tau}")));
        }
        Ok(Self { x, tau, z0: (2.0 * x - 1.0).atanh() })
    }

    /// `(z_plus, z_minus)`.
    pub fn centers(&self) -> (f64, f64) {
        (self.z0 + self.tau, self.z0 - self.tau)
    }

    pub fn variance(&self) -> f64 {
        self.tau
    }

    pub fn weights(&self) -> (f64, f64) {
        (self.x, 1.0 - self.x)
    }

    pub fn density(&self, z: f64) -> f64 {
        let (zp, zm) = self.centers();
        let norm = (2.0 * std::f64::consts::PI * self.tau).sqrt().recip();
        let g = |c: f64| (-(z - c).powi(2) / (2.0 * self.tau)).exp();
        norm * (self.x * g(zp) + (1.0 - self.x) * g(zm))
    }

    pub fn cdf(&self, z: f64) -> f64 {
        let (zp, zm) = self.centers();
        let s = (2.0 * self.tau).sqrt();
        let phi = |c: f64| 0.5 * erfc(-(z - c) / s);
        self.x * phi(zp) + (1.0 - self.x) * phi(zm)
    }

    /// `int f(z) p(z) dz`, integrating each peak over +-8 standard deviations.
    pub fn expectation<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        let sigma = self.tau.sqrt();
        let norm = (2.0 * std::f64::consts::PI * self.tau).sqrt().recip();
        let (zp, zm) = self.centers();
        let peak = |c: f64| {
            integrate(
                |z| f(z) * norm * (-(z - c).powi(2) / (2.0 * self.tau)).exp(),
                c - PEAK_HALF_WIDTH * sigma,
                c + PEAK_HALF_WIDTH * sigma,
                QUAD_TOL,
            )
        };
        self.x * peak(zp) + (1.0 - self.x) * peak(zm)
    }

    pub fn total_mass(&self) -> f64 {
        self.expectation(|_| 1.0)
    }

    /// `<tanh z>`; equals `2x - 1` for every `tau`.
    pub fn mean_tanh(&self) -> f64 {
        self.expectation(f64::tanh)
    }

    /// `<sech z>`; equals `e^{-tau/2} sech(z(0))`.
    pub fn mean_sech(&self) -> f64 {
        self.expectation(crate::state::sech)
    }
}

pub fn fokker_planck_density(x: f64, tau: f64, z: f64) -> Result<f64> {
    Ok(GaussianMixture::new(x, tau)?.density(z))
}

/// Noise-averaged qubit density matrix for the diffusion model: diagonal
/// frozen, `rho01(tau) = e^{-tau/2} rho01(0)`.
pub fn diffusion_ensemble_mean(initial: &QubitState, tau: f64) -> QubitState {
    QubitState::from_parts(initial.rho00(), initial.rho01() * (-0.5 * tau).exp())
}

/// Noise-averaged qubit density matrix for the jump model:
/// `rho01(tau) = e^{-tau} rho01(0)`.
pub fn jump_ensemble_mean(initial: &QubitState, tau: f64) -> QubitState {
    QubitState::from_parts(initial.rho00(), initial.rho01() * (-tau).exp())
}

/// Which unravelling a Lindblad solution is compared against. Both use the
/// single operator `L = sqrt(gamma) (P0 - P1)`; they differ in the rate
/// matching the collapse coupling `g`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecoherenceModel {
    Diffusion,
    Jump,
}

impl DecoherenceModel {
    /// `gamma = g/4` for diffusion, `g/2` for jumps.
    pub fn gamma(&self, g: f64) -> f64 {
        match self {
            DecoherenceModel::Diffusion => 0.25 * g,
            DecoherenceModel::Jump => 0.5 * g,
        }
    }
}

type C2 = Matrix2<Complex64>;

fn to_matrix(s: &QubitState) -> C2 {
    Matrix2::new(Complex64::new(s.rho00(), 0.0), s.rho01(), s.rho10(), Complex64::new(s.rho11(), 0.0))
}

fn from_matrix(m: &C2) -> QubitState {
    QubitState::from_parts(m[(0, 0)].re, m[(0, 1)])
}

fn real2(a: f64, b: f64, c: f64, d: f64) -> C2 {
    Matrix2::new(
        Complex64::new(a, 0.0),
        Complex64::new(b, 0.0),
        Complex64::new(c, 0.0),
        Complex64::new(d, 0.0),
    )
}

fn decoherence_operator(model: DecoherenceModel) -> C2 {
    match model {
        // sigma_3
        DecoherenceModel::Diffusion => real2(1.0, 0.0, 0.0, -1.0),
        // P0 - P1
        DecoherenceModel::Jump => real2(1.0, 0.0, 0.0, 0.0) - real2(0.0, 0.0, 0.0, 1.0),
    }
}

/// Solution of `d rho/dt = gamma (L rho L - rho)`:
/// `rho(t) = (1 + e^{-2 gamma t})/2 rho(0) + (1 - e^{-2 gamma t})/2 L rho(0) L`.
pub fn lindblad_solution(
    initial: &QubitState,
    gamma: f64,
    t: f64,
    model: DecoherenceModel,
) -> Result<QubitState> {
    if !(gamma > 0.0) {
        return Err(Error::InvalidParameter(format!("gamma must be positive, got {gamma}")));
    }
    if !(t >= 0.0) {
        return Err(Error::InvalidParameter(format!("t must be >= 0, got {t}")));
    }
    let l = decoherence_operator(model);
    let rho = to_matrix(initial);
    let e = (-2.0 * gamma * t).exp();
    let out = rho * Complex64::new(0.5 * (1.0 + e), 0.0) + l * rho * l * Complex64::new(0.5 * (1.0 - e), 0.0);
    Ok(from_matrix(&out))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KrausForm {
    /// `M0 ~ I`, `M3 ~ sigma_3`, with `Tr(M0 M3) = 0`.
    Orthogonal,
    /// `M+-` weighting the two projectors by `e^{+-eps/2}`.
    Symmetric,
}

/// Two-operator Kraus decomposition of the dephasing channel, parametrised by
/// `eps` with `cosh(eps) = e^{tau/2}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrausPair {
    pub epsilon: f64,
    pub form: KrausForm,
}

impl KrausPair {
    pub fn new(epsilon: f64, form: KrausForm) -> Result<Self> {
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!("epsilon must be >= 0, got {epsilon}")));
        }
        Ok(Self { epsilon, form })
    }

    /// Channel equal to the diffusion ensemble average after `tau = g t`.
    pub fn from_tau(tau: f64, form: KrausForm) -> Result<Self> {
        if !(tau >= 0.0) {
            return Err(Error::InvalidParameter(format!("tau must be >= 0, got {tau}")));
        }
        Self::new((0.5 * tau).exp().acosh(), form)
    }

    /// Evolution parameter this channel corresponds to: `2 ln cosh(eps)`.
    pub fn tau(&self) -> f64 {
        2.0 * self.epsilon.cosh().ln()
    }

    pub fn operators(&self) -> [Matrix2<Complex64>; 2] {
        let eps = self.epsilon;
        let c = eps.cosh();
        match self.form {
            KrausForm::Orthogonal => {
                let a = (0.5 * eps).cosh() / c.sqrt();
                let b = (0.5 * eps).sinh() / c.sqrt();
                [real2(a, 0.0, 0.0, a), real2(b, 0.0, 0.0, -b)]
            }
            KrausForm::Symmetric => {
                let n = (2.0 * c).sqrt();
                let (up, down) = ((0.5 * eps).exp() / n, (-0.5 * eps).exp() / n);
                [real2(up, 0.0, 0.0, down), real2(down, 0.0, 0.0, up)]
            }
        }
    }

    /// Max-entry deviation of `sum M_k^dagger M_k` from the identity.
    pub fn completeness_residual(&self) -> f64 {
        let [a, b] = self.operators();
        let sum = a.adjoint() * a + b.adjoint() * b - Matrix2::identity();
        sum.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// `|Tr(M0 M3)|` for the orthogonal form, `|Tr(M+^2) - Tr(M-^2)|` for the
    /// symmetric one.
    pub fn form_residual(&self) -> f64 {
        let [a, b] = self.operators();
        match self.form {
            KrausForm::Orthogonal => (a * b).trace().norm(),
            KrausForm::Symmetric => ((a * a).trace() - (b * b).trace()).norm(),
        }
    }
}

/// `sum_k M_k rho M_k^dagger`.
pub fn kraus_apply(state: &QubitState, kp: &KrausPair) -> QubitState {
    let rho = to_matrix(state);
    let out = kp.operators().iter().fold(Matrix2::zeros(), |acc: C2, m| acc + m * rho * m.adjoint());
    from_matrix(&out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WalkBranch {
    pub zc: ZCoordinate,
    pub probability: f64,
}

/// The symmetric Kraus channel read as a biased walk in `z`:
/// `z -> z +- eps` with probabilities `(1 +- tanh z tanh eps)/2`.
pub fn biased_walk_step(zc: &ZCoordinate, epsilon: f64) -> [WalkBranch; 2] {
    let bias = zc.z().tanh() * epsilon.tanh();
    [
        WalkBranch { zc: zc.with_z(zc.z() + epsilon), probability: 0.5 * (1.0 + bias) },
        WalkBranch { zc: zc.with_z(zc.z() - epsilon), probability: 0.5 * (1.0 - bias) },
    ]
}

/// Two-delta distribution of `rho00` in the jump model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpDistribution {
    /// Location of the no-jump delta.
    pub moving_position: f64,
    pub moving_weight: f64,
    /// Weight of the delta at `rho00 = 0`.
    pub stationary_weight: f64,
}

impl JumpDistribution {
    /// `sum position * weight`; equals `x`.
    pub fn mean(&self) -> f64 {
        self.moving_position * self.moving_weight
    }
}

pub fn jump_distribution(x: f64, tau: f64) -> Result<JumpDistribution> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::InvalidParameter(format!("x must lie in [0, 1], got {x}")));
    }
    if !(tau >= 0.0) {
        return Err(Error::InvalidParameter(format!("tau must be >= 0, got {tau}")));
    }
    let decay = (-2.0 * tau).exp();
    let moving_weight = x + (1.0 - x) * decay;
    let moving_position = if x == 0.0 { 0.0 } else { x / moving_weight };
    let stationary_weight = (1.0 - x) * -(-2.0 * tau).exp_m1();
    Ok(JumpDistribution { moving_position, moving_weight, stationary_weight })
}

/// Probability of still being on the no-jump branch at `tau` when the jump
/// rate is `lambda` times the Born rate: `(x + (1-x) e^{-2 tau})^lambda`.
pub fn jump_survival(x: f64, tau: f64, rate_multiplier: f64) -> f64 {
    (x + (1.0 - x) * (-2.0 * tau).exp()).powf(rate_multiplier)
}

/// Long-time probability of ending at `rho00 = 0` under a scaled jump rate:
/// `1 - x^lambda` (`1 - x` on the Born point).
pub fn jump_outcome_probability(x: f64, rate_multiplier: f64) -> f64 {
    1.0 - x.powf(rate_multiplier)
}

/// Comparison of a sampled noise second moment with the geodesic side of a
/// fluctuation-dissipation relation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdReport {
    /// Sample mean of the squared increments.
    pub lhs: f64,
    /// Noise strength implied by the geodesic drift.
    pub rhs: f64,
    /// `lhs / rhs - 1`.
    pub residual: f64,
    /// Standard error of `lhs / rhs`.
    pub std_err: f64,
    pub samples: usize,
}

fn second_moment(samples: &[f64]) -> Result<(f64, f64)> {
    if samples.len() < 2 {
        return Err(Error::InvalidParameter("need at least two samples".into()));
    }
    let n = samples.len() as f64;
    let m2 = samples.iter().map(|v| v * v).sum::<f64>() / n;
    let m4 = samples.iter().map(|v| v.powi(4)).sum::<f64>() / n;
    Ok((m2, ((m4 - m2 * m2).max(0.0) / n).sqrt()))
}

fn report(samples: &[f64], rhs: f64) -> Result<FdReport> {
    let (lhs, se) = second_moment(samples)?;
    Ok(FdReport { lhs, rhs, residual: lhs / rhs - 1.0, std_err: se / rhs, samples: samples.len() })
}

/// White noise: `<(d rho00 - d rho11)^2> = 4 rho00 rho11 (d rho00 - d rho11)_geo / (rho00 - rho11)`
/// with `(d rho00 - d rho11)_geo = 4g (rho00 - rho11) rho00 rho11 dt`.
/// `samples` are one-step increments of `rho00 - rho11` taken at `state`.
pub fn fd_check_diffusion(samples: &[f64], state: &QubitState, g: f64, dt: f64) -> Result<FdReport> {
    let (p, q) = (state.rho00(), state.rho11());
    let pol = p - q;
    if pol.abs() < 1e-12 {
        return Err(Error::SymmetricState);
    }
    let geo = 4.0 * g * pol * p * q * dt;
    report(samples, 4.0 * p * q * geo / pol)
}

/// Shot noise: `<(d rho00)^2> = rho00^2 (d rho00)_geo / rho00` with
/// `(d rho00)_geo = 2g rho00 rho11 dt`.
pub fn fd_check_jump(samples: &[f64], state: &QubitState, g: f64, dt: f64) -> Result<FdReport> {
    let (p, q) = (state.rho00(), state.rho11());
    if p <= 0.0 || q <= 0.0 {
        return Err(Error::InvalidParameter(format!("fd check needs an interior state, rho00 = {p}")));
    }
    let geo = 2.0 * g * p * q * dt;
    report(samples, p * p * geo / p)
}

/// Leading-order closed form of both sides of the white-noise relation:
/// `(16 g^2 S_xi rho00^2 rho11^2 dt, 16 g rho00^2 rho11^2 dt)`.
pub fn fd_diffusion_closed_form(state: &QubitState, g: f64, s_xi: f64, dt: f64) -> (f64, f64) {
    let pq2 = (state.rho00() * state.rho11()).powi(2);
    (16.0 * g * g * s_xi * pq2 * dt, 16.0 * g * pq2 * dt)
}
