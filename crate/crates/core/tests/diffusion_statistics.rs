//! Statistical properties of the white-noise model.

use qtraj_core::diffusion::{
    sample_wbar, step, step_z, z_increment, DiffusionParams, DiffusionPropagator, NoiseSpec, Scheme,
};
use qtraj_core::ensemble::{born_curve, EnsembleConfig, Model};
use qtraj_core::noise::substream;
use qtraj_core::state::ZCoordinate;
use qtraj_core::{NoiseFamily, QubitState};

fn born_spec(seed: u64, stream: u64) -> NoiseSpec {
    NoiseSpec::born(1.0, seed).unwrap().with_stream(stream)
}

#[test]
fn wbar_mean_and_variance() {
    let s = QubitState::pure(0.7, 0.0).unwrap();
    let spec = NoiseSpec::new(NoiseFamily::Gaussian, 2.0, 5, 0).unwrap();
    let dt = 1e-3;
    let mut rng = spec.rng();
    let n = 200_000;
    let draws: Vec<f64> = (0..n).map(|_| sample_wbar(&s, &spec, dt, &mut rng).unwrap()).collect();
    let mean = draws.iter().sum::<f64>() / n as f64;
    let var = draws.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let expected_var = 2.0 / dt;
    assert!((mean - s.polarization()).abs() < 3.0 * (expected_var / n as f64).sqrt(), "{mean}");
    // Relative SE of a Gaussian sample variance is sqrt(2/n).
    assert!((var / expected_var - 1.0).abs() < 3.0 * (2.0 / n as f64).sqrt(), "{var}");
}

#[test]
fn ito_ensemble_mean_is_conserved() {
    let x = 0.3;
    let n = 100_000;
    let params = DiffusionParams::new(1.0, 1e-3, Scheme::Ito, 25.0).unwrap();
    let mut sum = 0.0;
    for k in 0..n {
        let spec = born_spec(11, k);
        let mut rng = spec.rng();
        let mut s = QubitState::pure(x, 0.0).unwrap();
        for _ in 0..1000 {
            let st = step(&s, &spec, &params, &mut rng).unwrap();
            s = st.state;
            if st.absorbed.is_some() {
                break;
            }
        }
        sum += s.rho00();
    }
    let mean = sum / n as f64;
    assert!((mean - x).abs() < 3.0 * (x * (1.0 - x) / n as f64).sqrt(), "{mean}");
}

#[test]
fn z_noise_variance_grows_linearly() {
    // Drift removed: only the sqrt(g) dW part of each increment remains.
    let (g, dt, steps, n): (f64, f64, u32, u64) = (1.0, 1e-3, 1000, 100_000);
    let mut sum2 = 0.0;
    for k in 0..n {
        let mut rng = substream(21, k);
        let mut z = 0.0f64;
        for _ in 0..steps {
            let dw = dt.sqrt() * NoiseFamily::Gaussian.unit_draw(&mut rng);
            z += z_increment(z, dw, g, dt) - g * z.tanh() * dt;
        }
        sum2 += z * z;
    }
    let var = sum2 / n as f64;
    let t = steps as f64 * dt;
    assert!((var / (g * t) - 1.0).abs() < 0.05, "{var}");
}

#[test]
fn z_form_conserves_mean_tanh() {
    let z0 = 0.2f64.atanh();
    let params = DiffusionParams::new(1.0, 1e-3, Scheme::Integrated, 25.0).unwrap();
    let n = 100_000;
    let mut vals = Vec::with_capacity(n);
    for k in 0..n as u64 {
        let spec = born_spec(31, k);
        let mut rng = spec.rng();
        let mut zc = ZCoordinate::pure(z0, 0.0);
        for _ in 0..1000 {
            zc = step_z(&zc, &spec, &params, &mut rng).unwrap();
        }
        vals.push(zc.z().tanh());
    }
    let mean = vals.iter().sum::<f64>() / n as f64;
    let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    assert!((mean - 0.2).abs() < 3.0 * sd / (n as f64).sqrt(), "{mean}");
}

#[test]
fn symmetric_start_splits_evenly() {
    let cfg = EnsembleConfig { x_grid: vec![0.5], n_traj: 100_000, seed: 3, ..EnsembleConfig::default() };
    let p = &born_curve(&cfg).unwrap().points[0];
    assert!((p.p_hat - 0.5).abs() < 3.0 * p.std_err_at(0.5), "{}", p.p_hat);
}

#[test]
fn martingale_holds_for_every_scheme() {
    let x = 0.35;
    let n = 10_000;
    for scheme in [Scheme::Integrated, Scheme::Ito, Scheme::StratonovichHeun] {
        let params = DiffusionParams::new(1.0, 1e-3, scheme, 25.0).unwrap();
        let mut sum = 0.0;
        for k in 0..n {
            let mut prop = DiffusionPropagator::new(&QubitState::pure(x, 0.0).unwrap(), &born_spec(41, k), &params).unwrap();
            prop.advance_to_tau(2.0);
            sum += prop.rho00();
        }
        let mean = sum / n as f64;
        assert!((mean - x).abs() < 3.0 * (x * (1.0 - x) / n as f64).sqrt(), "{scheme:?}: {mean}");
    }
}

fn outcomes(scheme: Scheme, noise: NoiseFamily, seed: u64) -> Vec<(f64, f64, f64)> {
    let cfg = EnsembleConfig {
        x_grid: vec![0.3, 0.7],
        n_traj: 10_000,
        scheme,
        noise,
        seed,
        ..EnsembleConfig::default()
    };
    born_curve(&cfg).unwrap().points.iter().map(|p| (p.x, p.p_hat, p.std_err)).collect()
}

fn agree(a: &[(f64, f64, f64)], b: &[(f64, f64, f64)]) {
    for (p, q) in a.iter().zip(b) {
        let sd = (p.2 * p.2 + q.2 * q.2).sqrt();
        assert!((p.1 - q.1).abs() < 3.0 * sd, "x={}: {} vs {}", p.0, p.1, q.1);
    }
}

#[test]
fn integrated_and_ito_agree() {
    agree(&outcomes(Scheme::Integrated, NoiseFamily::Gaussian, 1), &outcomes(Scheme::Ito, NoiseFamily::Gaussian, 2));
}

#[test]
fn z2_and_gaussian_agree() {
    agree(&outcomes(Scheme::Integrated, NoiseFamily::Gaussian, 1), &outcomes(Scheme::Integrated, NoiseFamily::Z2, 2));
}

#[test]
fn doubling_g_and_halving_dt_changes_nothing() {
    let base = EnsembleConfig { x_grid: vec![0.2, 0.6], n_traj: 2_000, ..EnsembleConfig::default() };
    let a = born_curve(&base).unwrap();
    let b = born_curve(&EnsembleConfig { g: 2.0, dt: 0.5e-3, ..base }).unwrap();
    assert_eq!(a.points, b.points);
}

#[test]
fn biased_walk_obeys_the_born_rule() {
    let cfg = EnsembleConfig { model: Model::BiasedWalk, x_grid: vec![0.25, 0.8], n_traj: 20_000, ..EnsembleConfig::default() };
    for p in born_curve(&cfg).unwrap().points {
        assert!((p.p_hat - p.x).abs() < 3.0 * p.std_err_at(p.x), "x={}: {}", p.x, p.p_hat);
    }
}

#[test]
fn distance_to_fixed_point_decays_exponentially() {
    // Without absorption, |z| on each peak moves at unit speed, so the
    // minority weight ~ e^{-2|z|} decays as e^{-2 tau}.
    let params = DiffusionParams { absorb_eps: 0.0, ..DiffusionParams::new(1.0, 1e-3, Scheme::Integrated, 30.0).unwrap() };
    let taus = [5.0, 10.0, 15.0, 20.0];
    let n = 2_000;
    let mut log_minor: Vec<Vec<f64>> = vec![Vec::with_capacity(n); taus.len()];
    for k in 0..n as u64 {
        let mut prop = DiffusionPropagator::new(&QubitState::pure(0.6, 0.0).unwrap(), &born_spec(51, k), &params).unwrap();
        for (i, &tau) in taus.iter().enumerate() {
            prop.advance_to_tau(tau);
            let z = prop.z().abs();
            log_minor[i].push(-(1.0 + (2.0 * z).exp()).ln());
        }
    }
    let medians: Vec<f64> = log_minor
        .iter_mut()
        .map(|v| {
            v.sort_by(f64::total_cmp);
            v[v.len() / 2]
        })
        .collect();
    for w in medians.windows(2) {
        assert!(w[1] < w[0]);
    }
    let slope = (medians[3] - medians[0]) / (taus[3] - taus[0]);
    assert!((slope + 2.0).abs() < 0.2, "{slope}");
}
