//! Quantum measurement as geodesic collapse plus noise.
//!
//! Individual trajectories are pure states attracted toward measurement
//! eigenstates by a nonlinear geodesic flow. Noise in the trajectory weights
//! makes them wander, and a single relation between noise strength and
//! attraction (`g S_xi = 1` for white noise, a jump rate of `2 g rho11` for
//! shot noise) turns the Born rule into a constant of the evolution.
//!
//! * [`state`]: density-matrix types, the `z` coordinate, geodesic flow.
//! * [`diffusion`]: white-noise trajectories (qubit and n-level).
//! * [`jump`]: shot-noise trajectories with jumps to eigenstate 1.
//! * [`analytic`]: closed-form ensemble distributions and channels.
//! * [`ensemble`]: parallel, reproducible Monte Carlo ensembles.

pub mod analytic;
pub mod diffusion;
pub mod ensemble;
pub mod error;
pub mod jump;
pub mod noise;
pub mod quadrature;
pub mod record;
pub mod state;

pub use error::{Error, Result};
pub use noise::NoiseFamily;
pub use record::TrajectoryRecord;
pub use state::{DiagonalWeights, QubitState, TrajectoryWeights, ZCoordinate};
