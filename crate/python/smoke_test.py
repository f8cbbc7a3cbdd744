"""Smoke test for the qtraj Python extension.

Build and install first, e.g. `pip install --no-build-isolation ./crates/py`,
then run `python python/smoke_test.py`.
"""

import math

import qtraj


def close(a, b, tol):
    assert abs(a - b) <= tol, f"{a} vs {b} (tol {tol})"


def main():
    s = qtraj.QubitState.pure(0.6, 0.7)
    close(s.rho00 + s.rho11, 1.0, 0.0)
    close(s.purity_defect(), 0.0, 1e-15)
    close(s.z, math.atanh(0.2), 1e-15)

    pos, moving, stationary = qtraj.jump_distribution(0.6, 1.0)
    close(stationary, 0.345865886705354923, 1e-15)
    close(pos, 0.9172430971043683, 1e-15)
    close(pos * moving, 0.6, 1e-15)

    for form in ("orthogonal", "symmetric"):
        k = qtraj.kraus_apply(s, 2.0, form=form)
        lind = qtraj.lindblad_solution(s, 2.0)
        close(abs(k.rho01 - lind.rho01), 0.0, 1e-12)
    close(abs(qtraj.lindblad_solution(s, 2.0).rho01) / abs(s.rho01), math.exp(-1.0), 1e-12)

    zs = [-8 + 0.01 * i for i in range(1601)]
    mass = sum(qtraj.fokker_planck_density(0.6, 1.0, z) for z in zs) * 0.01
    close(mass, 1.0, 1e-6)

    rec = qtraj.simulate_trajectory(s, seed=1, record_stride=100)
    assert rec["outcome"] in (0, 1)
    assert all(0.0 <= r <= 1.0 for r in rec["rho00"])

    cfg = qtraj.EnsembleConfig(x_grid=[0.2, 0.5, 0.8], n_traj=4000, seed=7)
    curve = qtraj.born_curve(cfg)
    for p in curve["points"]:
        sd = math.sqrt(p["x"] * (1 - p["x"]) / p["n_total"])
        assert abs(p["p_hat"] - p["x"]) < 4 * sd, p
    assert curve == qtraj.born_curve(qtraj.EnsembleConfig(x_grid=[0.2, 0.5, 0.8], n_traj=4000, seed=7, threads=2))

    noise_free = qtraj.born_curve(qtraj.EnsembleConfig(x_grid=[0.3, 0.7], gsxi=0.0, n_traj=10))
    assert [p["p_hat"] for p in noise_free["points"]] == [0.0, 1.0]

    snaps = qtraj.distribution_snapshots(qtraj.EnsembleConfig(n_traj=2000, tau_snapshots=[1.0, 3.0], max_tau=40.0))
    assert [s["tau"] for s in snaps] == [1.0, 3.0]
    assert len(snaps[0]["counts"]) == 200

    jumps = qtraj.jump_ensemble(qtraj.EnsembleConfig(model="jump", n_traj=4000, tau_snapshots=[1.0]))
    j = jumps[0]
    close(j["stationary_weight"]["value"], j["oracle"][2], 4 * j["stationary_weight"]["std_err"])

    ml = qtraj.multilevel_born(qtraj.EnsembleConfig(n_traj=2000), [0.5, 0.3, 0.2])
    assert sum(ml["counts"]) + ml["n_unabsorbed"] == ml["n_total"]

    ratio, se = qtraj.fd_ratio_diffusion(0.7, gsxi=2.0, n=200_000)
    close(ratio, 2.0, 4 * 2.0 * se + 0.01)

    try:
        qtraj.EnsembleConfig(n_traj=0)
    except ValueError as e:
        assert "n_traj must be positive" in str(e)
    else:
        raise AssertionError("n_traj=0 accepted")

    print(f"qtraj {qtraj.__version__}: smoke test passed")


if __name__ == "__main__":
    main()
