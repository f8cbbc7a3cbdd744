//! Density-matrix value types and the deterministic geodesic collapse dynamics.
//!
//! The measurement basis is the computational basis, so a rank-one projector
//! `P_i` is represented by its index. A qubit is described by `rho00` and the
//! complex off-diagonal `rho01`; `rho11 = 1 - rho00` and `rho10 = conj(rho01)`
//! are implied.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Largest |z| handed out by [`to_z`]. `tanh(40)` is 1 to double precision.
pub const Z_MAX: f64 = 40.0;

/// Distance from a fixed point below which a state is snapped onto it.
pub const ABSORB_EPS: f64 = 1e-9;

/// Slack allowed on trace and positivity checks of caller-supplied states.
const VALIDATION_TOL: f64 = 1e-9;

/// A single qubit trajectory state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QubitState {
    rho00: f64,
    rho01: Complex64,
}

impl QubitState {
    pub fn new(rho00: f64, rho01: Complex64) -> Result<Self> {
        if !(0.0..=1.0).contains(&rho00) {
            return Err(Error::InvalidState(format!("rho00 = {rho00} outside [0, 1]")));
        }
        if !rho01.re.is_finite() || !rho01.im.is_finite() {
            return Err(Error::InvalidState("rho01 is not finite".into()));
        }
        if rho01.norm_sqr() > rho00 * (1.0 - rho00) + VALIDATION_TOL {
            return Err(Error::InvalidState(format!(
                "|rho01|^2 = {} exceeds rho00*rho11 = {}",
                rho01.norm_sqr(),
                rho00 * (1.0 - rho00)
            )));
        }
        Ok(Self { rho00, rho01 })
    }

    /// Pure state `sqrt(rho00)|0> + e^{-i phase} sqrt(rho11)|1>`, i.e.
    /// `rho01 = sqrt(rho00 rho11) e^{i phase}`.
    pub fn pure(rho00: f64, phase: f64) -> Result<Self> {
        let mag = (rho00 * (1.0 - rho00)).max(0.0).sqrt();
        Self::new(rho00, Complex64::from_polar(mag, phase))
    }

    /// Diagonal (incoherent) state with `rho01 = 0`.
    pub fn diagonal(rho00: f64) -> Result<Self> {
        Self::new(rho00, Complex64::new(0.0, 0.0))
    }

    /// The eigenstate `|index><index|`.
    pub fn basis(index: usize) -> Result<Self> {
        match index {
            0 => Ok(Self::from_parts(1.0, Complex64::new(0.0, 0.0))),
            1 => Ok(Self::from_parts(0.0, Complex64::new(0.0, 0.0))),
            _ => Err(Error::UnknownEigenstate { index, dim: 2 }),
        }
    }

    pub(crate) fn from_parts(rho00: f64, rho01: Complex64) -> Self {
        Self { rho00, rho01 }
    }

    pub fn rho00(&self) -> f64 {
        self.rho00
    }

    pub fn rho11(&self) -> f64 {
        1.0 - self.rho00
    }

    pub fn rho01(&self) -> Complex64 {
        self.rho01
    }

    pub fn rho10(&self) -> Complex64 {
        self.rho01.conj()
    }

    pub fn trace(&self) -> f64 {
        self.rho00 + self.rho11()
    }

    /// `rho00 - rho11`, the Bloch z-component.
    pub fn polarization(&self) -> f64 {
        2.0 * self.rho00 - 1.0
    }

    pub fn diagonal_weights(&self) -> DiagonalWeights {
        DiagonalWeights { d: vec![self.rho00, self.rho11()] }
    }

    /// Returns the eigenstate index if the state lies within `eps` of a
    /// fixed point.
    pub fn nearest_fixed_point(&self, eps: f64) -> Option<usize> {
        if self.rho11() <= eps {
            Some(0)
        } else if self.rho00 <= eps {
            Some(1)
        } else {
            None
        }
    }

    /// Snaps the state onto a fixed point if within `eps` of it.
    pub fn snapped(self, eps: f64) -> (Self, Option<usize>) {
        match self.nearest_fixed_point(eps) {
            Some(i) => (Self::basis(i).expect("qubit index"), Some(i)),
            None => (self, None),
        }
    }
}

/// Collapse coordinate `z` with `tanh(z) = rho00 - rho11`, together with the
/// reference needed to rebuild the off-diagonal element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZCoordinate {
    z: f64,
    offdiag0: Complex64,
    sech0: f64,
}

impl ZCoordinate {
    pub fn new(z: f64, offdiag0: Complex64, sech0: f64) -> Self {
        Self { z: z.clamp(-Z_MAX, Z_MAX), offdiag0, sech0 }
    }

    /// A coordinate that is its own reference, for a pure state at `z`.
    pub fn pure(z: f64, phase: f64) -> Self {
        let z = z.clamp(-Z_MAX, Z_MAX);
        let sech = sech(z);
        Self { z, offdiag0: Complex64::from_polar(0.5 * sech, phase), sech0: sech }
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn offdiag_ref(&self) -> (Complex64, f64) {
        (self.offdiag0, self.sech0)
    }

    /// Same reference, new position.
    pub fn with_z(&self, z: f64) -> Self {
        Self { z: z.clamp(-Z_MAX, Z_MAX), ..*self }
    }

    pub fn rho00(&self) -> f64 {
        rho00_from_z(self.z)
    }
}

/// `(1 + tanh z) / 2`, evaluated without cancellation for large negative z.
pub fn rho00_from_z(z: f64) -> f64 {
    1.0 / (1.0 + (-2.0 * z).exp())
}

pub fn sech(z: f64) -> f64 {
    let a = z.abs();
    let e = (-a).exp();
    2.0 * e / (1.0 + e * e)
}

/// `sech(z) / sech(z0)` without overflow for large arguments.
pub(crate) fn sech_ratio(z: f64, z0: f64) -> f64 {
    let (a, a0) = (z.abs(), z0.abs());
    let (e, e0) = ((-2.0 * a).exp(), (-2.0 * a0).exp());
    (a0 - a).exp() * (1.0 + e0) / (1.0 + e)
}

pub fn to_z(state: &QubitState) -> Result<ZCoordinate> {
    let rho00 = state.rho00();
    let rho11 = state.rho11();
    if rho00 <= 0.0 || rho11 <= 0.0 {
        return Err(Error::AtFixedPoint { rho00 });
    }
    let z = (0.5 * (rho00 / rho11).ln()).clamp(-Z_MAX, Z_MAX);
    Ok(ZCoordinate { z, offdiag0: state.rho01(), sech0: sech(z) })
}

/// Rebuilds the density matrix from `z`:
/// `rho01(t) = rho01(0) sech(z(t)) / sech(z(0))`.
pub fn from_z(zc: &ZCoordinate) -> QubitState {
    let scale = if zc.sech0 > 0.0 { sech(zc.z) / zc.sech0 } else { 0.0 };
    QubitState::from_parts(rho00_from_z(zc.z), zc.offdiag0 * scale)
}

/// The probabilities `d_j = Tr(P_j rho P_j)` for an n-level system.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalWeights {
    d: Vec<f64>,
}

impl DiagonalWeights {
    pub fn new(d: Vec<f64>) -> Result<Self> {
        if d.len() < 2 {
            return Err(Error::InvalidState(format!("need at least 2 levels, got {}", d.len())));
        }
        if let Some(bad) = d.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidState(format!("negative or non-finite weight {bad}")));
        }
        let total: f64 = d.iter().sum();
        if (total - 1.0).abs() > VALIDATION_TOL {
            return Err(Error::InvalidState(format!("weights sum to {total}, not 1")));
        }
        Ok(Self { d })
    }

    pub fn basis(dim: usize, index: usize) -> Result<Self> {
        if index >= dim {
            return Err(Error::UnknownEigenstate { index, dim });
        }
        let mut d = vec![0.0; dim];
        d[index] = 1.0;
        Self::new(d)
    }

    pub(crate) fn from_vec_unchecked(d: Vec<f64>) -> Self {
        Self { d }
    }

    pub fn len(&self) -> usize {
        self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.d
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.d
    }
}

/// Trajectory weights `w_i`; they sum to one but are not probabilities and
/// may be negative or exceed one.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryWeights {
    w: Vec<f64>,
}

impl TrajectoryWeights {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite trajectory weight".into()));
        }
        let total: f64 = w.iter().sum();
        if (total - 1.0).abs() > VALIDATION_TOL {
            return Err(Error::InvalidParameter(format!("trajectory weights sum to {total}, not 1")));
        }
        Ok(Self { w })
    }

    /// The noise-free choice `w_i = d_i`.
    pub fn instantaneous_born(d: &DiagonalWeights) -> Self {
        Self { w: d.d.clone() }
    }

    pub(crate) fn from_vec_unchecked(w: Vec<f64>) -> Self {
        Self { w }
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.w
    }

    /// `w_av = sum_i w_i d_i`.
    pub fn average(&self, d: &DiagonalWeights) -> f64 {
        self.w.iter().zip(&d.d).map(|(w, d)| w * d).sum()
    }
}

/// Time derivative of the diagonal under geodesic attraction to `target`:
/// `d(d_j)/dt = 2g d_j (delta_{j,target} - d_target)`.
pub fn geodesic_rhs(d: &DiagonalWeights, target: usize, g: f64) -> Result<Vec<f64>> {
    if target >= d.len() {
        return Err(Error::UnknownEigenstate { index: target, dim: d.len() });
    }
    check_coupling(g)?;
    let dt = d.d[target];
    Ok(d
        .d
        .iter()
        .enumerate()
        .map(|(j, &dj)| {
            let wj = if j == target { 1.0 } else { 0.0 };
            2.0 * g * dj * (wj - dt)
        })
        .collect())
}

/// `d(d_j)/dt = 2g d_j (w_j - sum_i w_i d_i)`.
pub fn weighted_geodesic_rhs(d: &DiagonalWeights, w: &TrajectoryWeights, g: f64) -> Result<Vec<f64>> {
    if d.len() != w.len() {
        return Err(Error::DimensionMismatch { expected: d.len(), got: w.len() });
    }
    check_coupling(g)?;
    let w_av = w.average(d);
    Ok(d.d.iter().zip(&w.w).map(|(&dj, &wj)| 2.0 * g * dj * (wj - w_av)).collect())
}

fn check_coupling(g: f64) -> Result<()> {
    if g > 0.0 && g.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("coupling g must be positive, got {g}")))
    }
}

/// Dense n x n density matrix, row-major. Only used as the carrier for
/// off-diagonal reconstruction; no general matrix algebra is provided.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    dim: usize,
    entries: Vec<Complex64>,
}

impl DensityMatrix {
    pub fn new(dim: usize, entries: Vec<Complex64>) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch { expected: dim * dim, got: entries.len() });
        }
        Ok(Self { dim, entries })
    }

    pub fn from_qubit(state: &QubitState) -> Self {
        Self {
            dim: 2,
            entries: vec![
                Complex64::new(state.rho00(), 0.0),
                state.rho01(),
                state.rho10(),
                Complex64::new(state.rho11(), 0.0),
            ],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.entries[row * self.dim + col]
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i).re).collect()
    }

    /// Qubit view; fails if `dim != 2`.
    pub fn to_qubit(&self) -> Result<QubitState> {
        if self.dim != 2 {
            return Err(Error::DimensionMismatch { expected: 2, got: self.dim });
        }
        QubitState::new(self.get(0, 0).re, self.get(0, 1))
    }
}

/// Off-diagonal projections are slaved to the diagonal:
/// `rho_jk(t) = rho_jk(0) [d_j(t) d_k(t) / (d_j(0) d_k(0))]^{1/2}`.
/// The returned matrix carries `d_t` on its diagonal.
pub fn offdiag_evolve(
    initial: &DensityMatrix,
    d_t: &DiagonalWeights,
    d_0: &DiagonalWeights,
) -> Result<DensityMatrix> {
    let n = initial.dim;
    for d in [d_t, d_0] {
        if d.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: d.len() });
        }
    }
    let mut entries = Vec::with_capacity(n * n);
    for j in 0..n {
        for k in 0..n {
            if j == k {
                entries.push(Complex64::new(d_t.d[j], 0.0));
                continue;
            }
            let rho = initial.get(j, k);
            if rho == Complex64::new(0.0, 0.0) {
                entries.push(rho);
                continue;
            }
            let denom = d_0.d[j] * d_0.d[k];
            if denom <= 0.0 {
                let index = if d_0.d[j] <= 0.0 { j } else { k };
                return Err(Error::InconsistentOffDiagonal { index });
            }
            entries.push(rho * (d_t.d[j] * d_t.d[k] / denom).sqrt());
        }
    }
    Ok(DensityMatrix { dim: n, entries })
}

/// Qubit specialisation of [`offdiag_evolve`] used on the hot path.
pub(crate) fn qubit_offdiag(rho01_0: Complex64, rho00_0: f64, rho00_t: f64) -> Complex64 {
    let denom = rho00_0 * (1.0 - rho00_0);
    if denom <= 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    rho01_0 * (rho00_t * (1.0 - rho00_t) / denom).sqrt()
}

/// `rho00 rho11 - |rho01|^2`; zero exactly for pure states.
pub fn purity_defect(state: &QubitState) -> f64 {
    state.rho00() * state.rho11() - state.rho01().norm_sqr()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn to_z_of_maximally_mixed_is_zero() {
        let zc = to_z(&QubitState::diagonal(0.5).unwrap()).unwrap();
        assert_eq!(zc.z(), 0.0);
    }

    #[test]
    fn from_z_at_one() {
        // (1 + tanh 1) / 2 to 20 digits: 0.88079707797788244406
        let s = from_z(&ZCoordinate::pure(1.0, 0.0));
        assert_relative_eq!(s.rho00(), 0.880_797_077_977_882_4, epsilon = 1e-15);
    }

    #[test]
    fn to_z_round_trip() {
        let s = QubitState::pure(0.6, 0.3).unwrap();
        let back = from_z(&to_z(&s).unwrap());
        assert!((back.rho00() - 0.6).abs() < 1e-12);
        assert!((back.rho01() - s.rho01()).norm() < 1e-12);
    }

    #[test]
    fn to_z_rejects_fixed_points() {
        for r in [0.0, 1.0] {
            let s = QubitState::diagonal(r).unwrap();
            assert!(matches!(to_z(&s), Err(Error::AtFixedPoint { .. })));
        }
    }

    #[test]
    fn to_z_clamps_near_boundary() {
        let s = QubitState::diagonal(1.0 - f64::EPSILON / 2.0).unwrap();
        let zc = to_z(&s).unwrap();
        assert!(zc.z() > 18.0 && zc.z() <= Z_MAX);
        assert_eq!(ZCoordinate::pure(1e3, 0.0).z(), Z_MAX);
        assert_eq!(ZCoordinate::pure(-1e3, 0.0).with_z(-1e4).z(), -Z_MAX);
    }

    #[test]
    fn state_validation() {
        assert!(QubitState::new(1.2, c(0.0, 0.0)).is_err());
        assert!(QubitState::new(0.5, c(0.6, 0.0)).is_err());
        assert!(QubitState::new(0.5, c(0.5, 0.0)).is_ok());
        assert!(DiagonalWeights::new(vec![0.5, 0.6]).is_err());
        assert!(DiagonalWeights::new(vec![1.2, -0.2]).is_err());
        assert!(TrajectoryWeights::new(vec![1.5, -0.5]).is_ok());
        assert!(TrajectoryWeights::new(vec![1.5, 0.5]).is_err());
    }

    #[test]
    fn geodesic_rhs_examples() {
        let d = DiagonalWeights::new(vec![0.5, 0.5]).unwrap();
        let r = geodesic_rhs(&d, 0, 1.0).unwrap();
        assert_eq!(r[0], 0.5);
        assert_eq!(r[1], -0.5);

        for target in 0..2 {
            let fixed = DiagonalWeights::basis(2, 0).unwrap();
            assert_eq!(geodesic_rhs(&fixed, target, 3.7).unwrap(), vec![0.0, 0.0]);
        }
        let other = DiagonalWeights::basis(2, 1).unwrap();
        assert_eq!(geodesic_rhs(&other, 0, 1.0).unwrap(), vec![0.0, 0.0]);

        assert!(matches!(
            geodesic_rhs(&d, 2, 1.0),
            Err(Error::UnknownEigenstate { index: 2, dim: 2 })
        ));
        assert!(geodesic_rhs(&d, 0, 0.0).is_err());
    }

    #[test]
    fn weighted_rhs_examples() {
        let d = DiagonalWeights::new(vec![0.6, 0.4]).unwrap();
        let w = TrajectoryWeights::new(vec![1.0, 0.0]).unwrap();
        let r = weighted_geodesic_rhs(&d, &w, 1.0).unwrap();
        assert_relative_eq!(r[0], 0.48, epsilon = 1e-15);

        let flat = TrajectoryWeights::new(vec![0.5, 0.5]).unwrap();
        assert_eq!(weighted_geodesic_rhs(&d, &flat, 2.0).unwrap(), vec![0.0, 0.0]);

        let d3 = DiagonalWeights::new(vec![0.5, 0.5, 0.0]).unwrap();
        let w3 = TrajectoryWeights::new(vec![-0.3, 0.1, 1.2]).unwrap();
        assert_eq!(weighted_geodesic_rhs(&d3, &w3, 1.0).unwrap()[2], 0.0);

        assert!(matches!(
            weighted_geodesic_rhs(&d3, &w, 1.0),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn offdiag_examples() {
        let init = DensityMatrix::from_qubit(&QubitState::new(0.5, c(0.5, 0.0)).unwrap());
        let d0 = DiagonalWeights::new(vec![0.5, 0.5]).unwrap();
        let same = offdiag_evolve(&init, &d0, &d0).unwrap();
        assert_eq!(same.get(0, 1), c(0.5, 0.0));

        let dt = DiagonalWeights::new(vec![0.9, 0.1]).unwrap();
        let out = offdiag_evolve(&init, &dt, &d0).unwrap();
        assert!((out.get(0, 1) - c(0.3, 0.0)).norm() < 1e-15);
        assert!((out.get(1, 0) - c(0.3, 0.0)).norm() < 1e-15);
        assert_eq!(out.diagonal(), vec![0.9, 0.1]);

        let incoherent = DensityMatrix::from_qubit(&QubitState::diagonal(0.5).unwrap());
        assert_eq!(offdiag_evolve(&incoherent, &dt, &d0).unwrap().get(0, 1), c(0.0, 0.0));
    }

    // Cross-check of the square-root law: integrate
    // d(rho01)/dt = g rho01 (w0 + w1 - 2 w_av) alongside the diagonal with RK4.
    #[test]
    fn offdiag_matches_integrated_projection_equation() {
        let g = 1.0;
        let w = [0.8, 0.2];
        let rhs = |y: [f64; 2]| {
            let (d0, r) = (y[0], y[1]);
            let w_av = w[0] * d0 + w[1] * (1.0 - d0);
            [2.0 * g * d0 * (w[0] - w_av), g * r * (w[0] + w[1] - 2.0 * w_av)]
        };
        let mut y = [0.5, 0.5];
        let h = 1e-3;
        for _ in 0..3000 {
            let k1 = rhs(y);
            let k2 = rhs([y[0] + 0.5 * h * k1[0], y[1] + 0.5 * h * k1[1]]);
            let k3 = rhs([y[0] + 0.5 * h * k2[0], y[1] + 0.5 * h * k2[1]]);
            let k4 = rhs([y[0] + h * k3[0], y[1] + h * k3[1]]);
            for i in 0..2 {
                y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        let init = DensityMatrix::from_qubit(&QubitState::new(0.5, c(0.5, 0.0)).unwrap());
        let d0 = DiagonalWeights::new(vec![0.5, 0.5]).unwrap();
        let dt = DiagonalWeights::new(vec![y[0], 1.0 - y[0]]).unwrap();
        let out = offdiag_evolve(&init, &dt, &d0).unwrap();
        assert!((out.get(0, 1).re - y[1]).abs() < 1e-10);
    }

    #[test]
    fn offdiag_inconsistent_input() {
        let init = DensityMatrix::new(
            2,
            vec![c(0.0, 0.0), c(0.1, 0.0), c(0.1, 0.0), c(1.0, 0.0)],
        )
        .unwrap();
        let d0 = DiagonalWeights::new(vec![0.0, 1.0]).unwrap();
        assert!(matches!(
            offdiag_evolve(&init, &d0, &d0),
            Err(Error::InconsistentOffDiagonal { index: 0 })
        ));
    }

    #[test]
    fn purity_defect_examples() {
        assert_eq!(purity_defect(&QubitState::basis(0).unwrap()), 0.0);
        assert_eq!(purity_defect(&QubitState::new(0.5, c(0.5, 0.0)).unwrap()), 0.0);
        assert_eq!(purity_defect(&QubitState::diagonal(0.5).unwrap()), 0.25);
    }

    #[test]
    fn snapping() {
        let s = QubitState::pure(1.0 - 1e-10, 0.0).unwrap();
        let (snapped, idx) = s.snapped(ABSORB_EPS);
        assert_eq!(idx, Some(0));
        assert_eq!(snapped.rho00(), 1.0);
        assert_eq!(snapped.rho01(), c(0.0, 0.0));
        let (same, none) = QubitState::pure(0.3, 0.0).unwrap().snapped(ABSORB_EPS);
        assert_eq!(none, None);
        assert_eq!(same.rho00(), 0.3);
    }

    proptest! {
        #[test]
        fn trace_is_exactly_one(r in 0.0f64..=1.0) {
            prop_assert_eq!(QubitState::diagonal(r).unwrap().trace(), 1.0);
        }

        #[test]
        fn z_round_trip(r in 1e-6f64..(1.0 - 1e-6), phase in -3.0f64..3.0) {
            let s = QubitState::pure(r, phase).unwrap();
            let back = from_z(&to_z(&s).unwrap());
            prop_assert!((back.rho00() - r).abs() < 1e-12);
            prop_assert!(purity_defect(&back).abs() < 1e-12);
        }

        #[test]
        fn weighted_rhs_conserves_trace_and_sign_structure(
            raw in proptest::collection::vec(0.0f64..1.0, 2..6),
            wraw in proptest::collection::vec(-2.0f64..2.0, 6),
            g in 0.1f64..5.0,
        ) {
            let total: f64 = raw.iter().sum();
            prop_assume!(total > 1e-3);
            let d = DiagonalWeights::new(raw.iter().map(|v| v / total).collect()).unwrap();
            let n = d.len();
            let mut w: Vec<f64> = wraw[..n].to_vec();
            let shift = (1.0 - w.iter().sum::<f64>()) / n as f64;
            w.iter_mut().for_each(|v| *v += shift);
            let w = TrajectoryWeights::new(w).unwrap();
            let r = weighted_geodesic_rhs(&d, &w, g).unwrap();
            let scale: f64 = r.iter().map(|v| v.abs()).sum::<f64>() + 1.0;
            prop_assert!(r.iter().sum::<f64>().abs() <= 1e-14 * scale);
            let w_av = w.average(&d);
            for j in 0..n {
                let dj = d.as_slice()[j];
                let wj = w.as_slice()[j];
                if dj > 0.0 && wj > w_av { prop_assert!(r[j] > 0.0); }
                if dj > 0.0 && wj < w_av { prop_assert!(r[j] < 0.0); }
                if dj == 0.0 { prop_assert_eq!(r[j], 0.0); }
            }
        }
    }
}
