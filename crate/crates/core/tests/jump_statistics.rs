//! Statistical properties of the shot-noise model.

use qtraj_core::analytic::{fd_check_jump, jump_outcome_probability};
use qtraj_core::ensemble::{decoherence_comparison, jump_ensemble, EnsembleConfig, Model};
use qtraj_core::jump::{increment_samples, no_jump_position, simulate_jump_trajectory, JumpParams};
use qtraj_core::QubitState;

fn jump_cfg(n: usize) -> EnsembleConfig {
    EnsembleConfig { model: Model::Jump, n_traj: n, x_grid: vec![0.6], ..EnsembleConfig::default() }
}

#[test]
fn survival_weight_and_outcome_split() {
    let taus = vec![0.5, 1.0, 2.0];
    let r = jump_ensemble(&EnsembleConfig { tau_snapshots: taus, ..jump_cfg(50_000) }).unwrap().remove(0);
    let x = r.x;
    for s in &r.snapshots {
        let survive = x + (1.0 - x) * (-2.0 * s.tau).exp();
        let sd = (survive * (1.0 - survive) / 50_000.0).sqrt();
        assert!((s.moving_weight.value - survive).abs() < 3.0 * sd, "tau={}: {}", s.tau, s.moving_weight.value);
        assert!(
            (s.moving_position.value - no_jump_position(x, s.tau)).abs() <= 3.0 * s.moving_position.std_err + 1e-12,
            "tau={}",
            s.tau
        );
    }
    let o = r.outcome;
    assert_eq!(o.n_unabsorbed(), 0);
    assert!((o.p_hat - x).abs() < 3.0 * o.std_err_at(x), "{}", o.p_hat);
}

#[test]
fn ensemble_mean_is_constant() {
    let cfg = EnsembleConfig { phase: 0.3, tau_snapshots: vec![0.5, 1.0, 3.0], ..jump_cfg(50_000) };
    for row in decoherence_comparison(&cfg).unwrap().rows {
        let sd = (0.6f64 * 0.4 / 50_000.0).sqrt();
        assert!((row.mean_state.rho00() - 0.6).abs() < 3.0 * sd, "tau={}", row.tau);
    }
}

#[test]
fn no_jump_coherence_follows_closed_form() {
    let (x, phase) = (0.3, 1.1);
    let initial = QubitState::pure(x, phase).unwrap();
    for stream in 0..20 {
        let params = JumpParams { stream_id: stream, record_stride: 50, ..JumpParams::default() };
        let rec = simulate_jump_trajectory(&initial, &params).unwrap();
        let cutoff = rec.jump_tau.unwrap_or(f64::INFINITY);
        for (tau, s) in rec.samples.iter().filter(|(t, _)| *t < cutoff && *t < 8.0) {
            let expected = initial.rho01() / (x * tau.exp() + (1.0 - x) * (-tau).exp());
            assert!((s.rho01() - expected).norm() < 1e-12, "tau={tau}");
        }
    }
}

#[test]
fn shot_noise_fluctuation_dissipation() {
    let state = QubitState::pure(0.7, 0.0).unwrap();
    let params = JumpParams { dt: 1e-2, seed: 9, ..JumpParams::default() };
    let samples = increment_samples(&state, &params, 1_000_000).unwrap();
    let rep = fd_check_jump(&samples, &state, params.g, params.dt).unwrap();
    assert!(rep.residual.abs() < 0.05, "{rep:?}");
}

/// Absorbed-at-0 probability under a scaled jump rate, by RK4 on the
/// survival equation `dS/dtau = -2 lambda rho11(tau) S` along the no-jump
/// branch.
fn survival_ode_oracle(x: f64, lambda: f64, tau_max: f64, h: f64) -> f64 {
    let rate = |tau: f64| {
        let e = (1.0 - x) * (-2.0 * tau).exp();
        2.0 * lambda * e / (x + e)
    };
    let mut s = 1.0;
    let mut tau = 0.0;
    while tau < tau_max {
        let f = |t: f64, s: f64| -rate(t) * s;
        let k1 = f(tau, s);
        let k2 = f(tau + 0.5 * h, s + 0.5 * h * k1);
        let k3 = f(tau + 0.5 * h, s + 0.5 * h * k2);
        let k4 = f(tau + h, s + h * k3);
        s += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        tau += h;
    }
    1.0 - s
}

#[test]
fn doubled_jump_rate_breaks_the_born_rule() {
    let (x, lambda, n) = (0.6, 2.0, 100_000);
    let oracle = survival_ode_oracle(x, lambda, 30.0, 1e-3);
    assert!((oracle - jump_outcome_probability(x, lambda)).abs() < 1e-9, "{oracle}");

    let r = jump_ensemble(&EnsembleConfig { rate_multiplier: lambda, ..jump_cfg(n) }).unwrap().remove(0);
    let p0 = 1.0 - r.outcome.p_hat;
    let sd = (oracle * (1.0 - oracle) / n as f64).sqrt();
    assert!((p0 - oracle).abs() < 3.0 * sd, "{p0} vs {oracle}");
    let born_sd = (x * (1.0 - x) / n as f64).sqrt();
    assert!((p0 - (1.0 - x)).abs() > 5.0 * born_sd);
}
