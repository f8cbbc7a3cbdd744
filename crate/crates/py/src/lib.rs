//! Python bindings: states, single trajectories, ensembles and the closed-form
//! oracles. Ensemble results come back as plain dicts and lists.

use num_complex::Complex64;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use qtraj_core::analytic::{self, DecoherenceModel, KrausForm, KrausPair};
use qtraj_core::diffusion::{self, DiffusionParams, NoiseSpec, Scheme};
use qtraj_core::ensemble::{self, EnsembleConfig as CoreConfig, Estimate, Model, OutcomeEstimate};
use qtraj_core::jump::{self, JumpParams};
use qtraj_core::state::{purity_defect, to_z, ABSORB_EPS};
use qtraj_core::{DiagonalWeights, NoiseFamily, TrajectoryRecord};

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyclass(frozen, module = "qtraj", skip_from_py_object)]
#[derive(Clone, Copy)]
struct QubitState {
    inner: qtraj_core::QubitState,
}

#[pymethods]
impl QubitState {
    #[new]
    #[pyo3(signature = (rho00, rho01 = Complex64::new(0.0, 0.0)))]
    fn new(rho00: f64, rho01: Complex64) -> PyResult<Self> {
        Ok(Self { inner: qtraj_core::QubitState::new(rho00, rho01).map_err(err)? })
    }

    /// Pure state with `rho00 = x` and off-diagonal phase `phase`.
    #[staticmethod]
    #[pyo3(signature = (x, phase = 0.0))]
    fn pure(x: f64, phase: f64) -> PyResult<Self> {
        Ok(Self { inner: qtraj_core::QubitState::pure(x, phase).map_err(err)? })
    }

    #[getter]
    fn rho00(&self) -> f64 {
        self.inner.rho00()
    }

    #[getter]
    fn rho11(&self) -> f64 {
        self.inner.rho11()
    }

    #[getter]
    fn rho01(&self) -> Complex64 {
        self.inner.rho01()
    }

    /// `atanh(rho00 - rho11)`; fails at the fixed points.
    #[getter]
    fn z(&self) -> PyResult<f64> {
        Ok(to_z(&self.inner).map_err(err)?.z())
    }

    fn purity_defect(&self) -> f64 {
        purity_defect(&self.inner)
    }

    fn __repr__(&self) -> String {
        let c = self.inner.rho01();
        format!("QubitState(rho00={}, rho01={}{:+}j)", self.inner.rho00(), c.re, c.im)
    }
}

#[pyclass(module = "qtraj", skip_from_py_object)]
#[derive(Clone)]
struct EnsembleConfig {
    inner: CoreConfig,
}

#[pymethods]
impl EnsembleConfig {
    #[new]
    #[pyo3(signature = (
        model = "diffusion", n_traj = 10_000, x_grid = None, gsxi = 1.0, rate_multiplier = 1.0,
        g = 1.0, dt = 1e-3, scheme = "integrated", noise = "gaussian", tau_snapshots = None,
        seed = 42, max_tau = 25.0, phase = 0.0, threads = 0
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        model: &str,
        n_traj: usize,
        x_grid: Option<Vec<f64>>,
        gsxi: f64,
        rate_multiplier: f64,
        g: f64,
        dt: f64,
        scheme: &str,
        noise: &str,
        tau_snapshots: Option<Vec<f64>>,
        seed: u64,
        max_tau: f64,
        phase: f64,
        threads: usize,
    ) -> PyResult<Self> {
        let inner = CoreConfig {
            model: model.parse::<Model>().map_err(err)?,
            n_traj,
            x_grid: x_grid.unwrap_or_else(|| vec![0.6]),
            gsxi,
            rate_multiplier,
            g,
            dt,
            scheme: scheme.parse::<Scheme>().map_err(err)?,
            noise: noise.parse::<NoiseFamily>().map_err(err)?,
            tau_snapshots: tau_snapshots.unwrap_or_default(),
            seed,
            max_tau,
            absorb_eps: ABSORB_EPS,
            phase,
            threads,
        };
        inner.validate().map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn n_traj(&self) -> usize {
        self.inner.n_traj
    }

    #[getter]
    fn x_grid(&self) -> Vec<f64> {
        self.inner.x_grid.clone()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    fn __repr__(&self) -> String {
        format!(
            "EnsembleConfig(model={}, n_traj={}, x_grid={:?}, gsxi={}, seed={})",
            self.inner.model, self.inner.n_traj, self.inner.x_grid, self.inner.gsxi, self.inner.seed
        )
    }
}

fn estimate<'py>(py: Python<'py>, e: &Estimate) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("value", e.value)?;
    d.set_item("std_err", e.std_err)?;
    Ok(d)
}

fn outcome<'py>(py: Python<'py>, o: &OutcomeEstimate) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("x", o.x)?;
    d.set_item("p_hat", o.p_hat)?;
    d.set_item("std_err", o.std_err)?;
    d.set_item("n_absorbed", o.n_absorbed)?;
    d.set_item("n_unabsorbed", o.n_unabsorbed())?;
    d.set_item("n_total", o.n_total)?;
    Ok(d)
}

/// Fraction of trajectories absorbed at `rho00 = 1` for each `x`.
#[pyfunction]
fn born_curve<'py>(py: Python<'py>, config: &EnsembleConfig) -> PyResult<Bound<'py, PyDict>> {
    let cfg = config.inner.clone();
    let curve = py.detach(|| ensemble::born_curve(&cfg)).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("gsxi", curve.gsxi)?;
    d.set_item("flagged", curve.flagged)?;
    let points = curve.points.iter().map(|p| outcome(py, p)).collect::<PyResult<Vec<_>>>()?;
    d.set_item("points", points)?;
    Ok(d)
}

/// Histograms and peak moments of `z` at each snapshot (first `x` only).
#[pyfunction]
fn distribution_snapshots<'py>(py: Python<'py>, config: &EnsembleConfig) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let cfg = config.inner.clone();
    let r = py.detach(|| ensemble::distribution_snapshots(&cfg)).map_err(err)?;
    let r = &r[0];
    r.snapshots
        .iter()
        .map(|s| {
            let d = PyDict::new(py);
            d.set_item("tau", s.tau)?;
            d.set_item("edges", s.histogram.edges())?;
            d.set_item("counts", s.histogram.counts.clone())?;
            d.set_item("density", s.histogram.density())?;
            for (i, p) in s.peaks.iter().enumerate() {
                let pd = PyDict::new(py);
                pd.set_item("count", p.count)?;
                pd.set_item("mean", estimate(py, &p.mean)?)?;
                pd.set_item("variance", estimate(py, &p.variance)?)?;
                pd.set_item("expected_mean", p.expected_mean)?;
                pd.set_item("expected_variance", p.expected_variance)?;
                d.set_item(format!("peak{i}"), pd)?;
            }
            d.set_item("mean_tanh", estimate(py, &s.mean_tanh)?)?;
            d.set_item("mean_sech", estimate(py, &s.mean_sech)?)?;
            d.set_item("within_1pct", s.within_1pct)?;
            d.set_item("within_01pct", s.within_01pct)?;
            d.set_item("chi2", s.chi2)?;
            d.set_item("chi2_dof", s.chi2_dof)?;
            d.set_item("outcome", outcome(py, &r.outcome)?)?;
            Ok(d)
        })
        .collect()
}

/// Empirical two-delta decomposition of the jump ensemble against its oracle.
#[pyfunction]
fn jump_ensemble<'py>(py: Python<'py>, config: &EnsembleConfig) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let cfg = config.inner.clone();
    let r = py.detach(|| ensemble::jump_ensemble(&cfg)).map_err(err)?;
    r[0].snapshots
        .iter()
        .map(|s| {
            let d = PyDict::new(py);
            d.set_item("tau", s.tau)?;
            d.set_item("moving_position", estimate(py, &s.moving_position)?)?;
            d.set_item("moving_weight", estimate(py, &s.moving_weight)?)?;
            d.set_item("stationary_weight", estimate(py, &s.stationary_weight)?)?;
            d.set_item(
                "oracle",
                (s.oracle.moving_position, s.oracle.moving_weight, s.oracle.stationary_weight),
            )?;
            Ok(d)
        })
        .collect()
}

/// Outcome frequencies of n-level diffusion trajectories from diagonal `d`.
#[pyfunction]
fn multilevel_born<'py>(py: Python<'py>, config: &EnsembleConfig, d: Vec<f64>) -> PyResult<Bound<'py, PyDict>> {
    let cfg = config.inner.clone();
    let weights = DiagonalWeights::new(d).map_err(err)?;
    let r = py.detach(|| ensemble::multilevel_born(&cfg, &weights)).map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("counts", r.counts.clone())?;
    out.set_item("frequencies", r.frequencies.iter().map(|f| f.value).collect::<Vec<_>>())?;
    out.set_item("n_unabsorbed", r.n_unabsorbed)?;
    out.set_item("n_total", r.n_total)?;
    Ok(out)
}

fn record<'py>(py: Python<'py>, rec: &TrajectoryRecord) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("tau", rec.samples.iter().map(|(t, _)| *t).collect::<Vec<_>>())?;
    d.set_item("rho00", rec.samples.iter().map(|(_, s)| s.rho00()).collect::<Vec<_>>())?;
    d.set_item("rho01", rec.samples.iter().map(|(_, s)| s.rho01()).collect::<Vec<_>>())?;
    d.set_item("outcome", rec.outcome)?;
    d.set_item("final_tau", rec.final_tau)?;
    d.set_item("jump_tau", rec.jump_tau)?;
    Ok(d)
}

/// One white-noise trajectory, sampled every `record_stride` steps.
#[pyfunction]
#[pyo3(signature = (initial, gsxi = 1.0, seed = 42, stream = 0, g = 1.0, dt = 1e-3, max_tau = 25.0, record_stride = 10, scheme = "integrated"))]
#[allow(clippy::too_many_arguments)]
fn simulate_trajectory<'py>(
    py: Python<'py>,
    initial: &QubitState,
    gsxi: f64,
    seed: u64,
    stream: u64,
    g: f64,
    dt: f64,
    max_tau: f64,
    record_stride: u64,
    scheme: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let spec = NoiseSpec::from_gsxi(NoiseFamily::Gaussian, gsxi, g, seed).map_err(err)?.with_stream(stream);
    let params = DiffusionParams {
        record_stride,
        ..DiffusionParams::new(g, dt, scheme.parse::<Scheme>().map_err(err)?, max_tau).map_err(err)?
    };
    let rec = diffusion::simulate_trajectory(&initial.inner, &spec, &params).map_err(err)?;
    record(py, &rec)
}

/// One shot-noise trajectory.
#[pyfunction]
#[pyo3(signature = (initial, rate_multiplier = 1.0, seed = 42, stream = 0, g = 1.0, dt = 1e-3, max_tau = 25.0, record_stride = 10))]
#[allow(clippy::too_many_arguments)]
fn simulate_jump_trajectory<'py>(
    py: Python<'py>,
    initial: &QubitState,
    rate_multiplier: f64,
    seed: u64,
    stream: u64,
    g: f64,
    dt: f64,
    max_tau: f64,
    record_stride: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let params = JumpParams {
        g,
        dt,
        rate_multiplier,
        seed,
        stream_id: stream,
        max_tau,
        absorb_eps: ABSORB_EPS,
        record_stride,
    };
    let rec = jump::simulate_jump_trajectory(&initial.inner, &params).map_err(err)?;
    record(py, &rec)
}

/// Two-Gaussian density of `z` at evolution parameter `tau`.
#[pyfunction]
fn fokker_planck_density(x: f64, tau: f64, z: f64) -> PyResult<f64> {
    analytic::fokker_planck_density(x, tau, z).map_err(err)
}

/// `(moving_position, moving_weight, stationary_weight)`.
#[pyfunction]
fn jump_distribution(x: f64, tau: f64) -> PyResult<(f64, f64, f64)> {
    let j = analytic::jump_distribution(x, tau).map_err(err)?;
    Ok((j.moving_position, j.moving_weight, j.stationary_weight))
}

fn decoherence_model(name: &str) -> PyResult<DecoherenceModel> {
    match name {
        "diffusion" => Ok(DecoherenceModel::Diffusion),
        "jump" => Ok(DecoherenceModel::Jump),
        other => Err(err(format!("unknown model '{other}' (expected diffusion or jump)"))),
    }
}

/// Lindblad evolution for time `t` at coupling `g`.
#[pyfunction]
#[pyo3(signature = (initial, t, g = 1.0, model = "diffusion"))]
fn lindblad_solution(initial: &QubitState, t: f64, g: f64, model: &str) -> PyResult<QubitState> {
    let m = decoherence_model(model)?;
    let inner = analytic::lindblad_solution(&initial.inner, m.gamma(g), t, m).map_err(err)?;
    Ok(QubitState { inner })
}

/// Dephasing channel for evolution parameter `tau` in Kraus form.
#[pyfunction]
#[pyo3(signature = (initial, tau, form = "orthogonal"))]
fn kraus_apply(initial: &QubitState, tau: f64, form: &str) -> PyResult<QubitState> {
    let form = match form {
        "orthogonal" => KrausForm::Orthogonal,
        "symmetric" => KrausForm::Symmetric,
        other => return Err(err(format!("unknown Kraus form '{other}'"))),
    };
    let pair = KrausPair::from_tau(tau, form).map_err(err)?;
    Ok(QubitState { inner: analytic::kraus_apply(&initial.inner, &pair) })
}

/// `<(d rho00 - d rho11)^2>` over `n` one-step samples divided by the
/// geodesic prediction; returns `(ratio, std_err)`.
#[pyfunction]
#[pyo3(signature = (rho00, gsxi = 1.0, n = 100_000, g = 1.0, dt = 1e-3, seed = 42))]
fn fd_ratio_diffusion(rho00: f64, gsxi: f64, n: usize, g: f64, dt: f64, seed: u64) -> PyResult<(f64, f64)> {
    let state = qtraj_core::QubitState::pure(rho00, 0.0).map_err(err)?;
    let spec = NoiseSpec::from_gsxi(NoiseFamily::Gaussian, gsxi, g, seed).map_err(err)?;
    let params = DiffusionParams::new(g, dt, Scheme::Integrated, 25.0).map_err(err)?;
    let samples = diffusion::increment_samples(&state, &spec, &params, n).map_err(err)?;
    let rep = analytic::fd_check_diffusion(&samples, &state, g, dt).map_err(err)?;
    Ok((rep.lhs / rep.rhs, rep.std_err))
}

#[pymodule]
fn qtraj(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<QubitState>()?;
    m.add_class::<EnsembleConfig>()?;
    m.add_function(wrap_pyfunction!(born_curve, m)?)?;
    m.add_function(wrap_pyfunction!(distribution_snapshots, m)?)?;
    m.add_function(wrap_pyfunction!(jump_ensemble, m)?)?;
    m.add_function(wrap_pyfunction!(multilevel_born, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_trajectory, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_jump_trajectory, m)?)?;
    m.add_function(wrap_pyfunction!(fokker_planck_density, m)?)?;
    m.add_function(wrap_pyfunction!(jump_distribution, m)?)?;
    m.add_function(wrap_pyfunction!(lindblad_solution, m)?)?;
    m.add_function(wrap_pyfunction!(kraus_apply, m)?)?;
    m.add_function(wrap_pyfunction!(fd_ratio_diffusion, m)?)?;
    Ok(())
}
