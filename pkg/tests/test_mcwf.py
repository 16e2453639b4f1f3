import math

import numpy as np
import pytest
from scipy import stats

from arasim import mcwf
from arasim.bath import BathSpec, gamma
from arasim.csvout import read_csv
from arasim.errors import DomainError, SolverError
from arasim.lindblad import LindbladSet, integrate_ame
from arasim.mcwf import TrajectoryConfig, evolve_closed, evolve_trajectory, run_ensemble

from conftest import make_path

GRID = np.linspace(0, 1, 11)


def test_zero_coupling_has_no_jumps():
    path = make_path(3, "2/3", tau=10.0)
    rec = evolve_trajectory(path, BathSpec(eta=0.0), s_grid=GRID)
    closed = evolve_closed(path, s_grid=GRID, rtol=1e-8, atol=1e-10)
    assert rec.n_jumps == 0
    assert np.max(np.abs(rec.ground_population - closed.ground_population)) < 1e-6


def test_poisson_dephasing_counts():
    # frozen at the problem Hamiltonian the ground state only sees the zero-frequency channel
    path = make_path(2, "1")
    bath = BathSpec(eta=2e-2, coupling="collective")
    tau = 5.0
    lam = 4 * float(gamma(bath, 0.0)) * tau
    assert lam == pytest.approx(3.95, abs=0.01)
    k = 10_000
    eng = mcwf._Unraveler(path, bath, None, tau, rtol=1e-8, atol=1e-10, h_max=0.05, min_overlap=0.999,
                          freeze_at=1.0)
    psi0 = np.zeros(4, complex)
    psi0[3] = 1.0
    cfg = TrajectoryConfig(n_trajectories=k, seed=7)
    counts = np.array([eng.run(psi0, np.array([0.0, 1.0]), cfg.rng(i)).n_jumps for i in range(k)])
    se = math.sqrt(lam / k)
    assert abs(counts.mean() - lam) < 3 * se
    for n in range(8):
        p = stats.poisson.pmf(n, lam)
        freq = np.mean(counts == n)
        assert abs(freq - p) < 3 * math.sqrt(p * (1 - p) / k)


def test_runs_are_bitwise_reproducible():
    path = make_path(2, "1/2", tau=20.0)
    bath = BathSpec(eta=1e-2, coupling="independent")
    cfg = TrajectoryConfig(n_trajectories=20, seed=99)
    a = run_ensemble(path, bath, config=cfg, s_grid=GRID)
    b = run_ensemble(path, bath, config=cfg, s_grid=GRID)
    assert np.array_equal(a.mean_ground_population, b.mean_ground_population)
    assert np.array_equal(a.stderr_ground_population, b.stderr_ground_population)
    assert np.array_equal(a.density, b.density)
    c = run_ensemble(path, bath, config=cfg, s_grid=GRID, workers=2)
    assert np.array_equal(a.mean_ground_population, c.mean_ground_population)


def test_prefix_of_larger_run_is_smaller_run():
    path = make_path(2, "1/2", tau=20.0)
    bath = BathSpec(eta=1e-2, coupling="independent")
    big = run_ensemble(path, bath, config=TrajectoryConfig(n_trajectories=12, seed=4), s_grid=GRID,
                       keep_records=True)
    small = run_ensemble(path, bath, config=TrajectoryConfig(n_trajectories=5, seed=4), s_grid=GRID)
    sub = mcwf.aggregate(big.records[:5], path)
    assert np.array_equal(sub.mean_ground_population, small.mean_ground_population)
    assert np.array_equal(sub.stderr_ground_population, small.stderr_ground_population)
    assert np.array_equal(sub.density, small.density)


def test_single_trajectory_has_undefined_error():
    path = make_path(2, "1/2", tau=10.0)
    res = run_ensemble(path, BathSpec(eta=1e-2, coupling="independent"),
                       config=TrajectoryConfig(n_trajectories=1), s_grid=GRID)
    assert not res.stderr_defined
    assert np.all(np.isnan(res.stderr_ground_population))
    assert np.all(np.isfinite(res.mean_ground_population))


def test_stderr_scales_with_inverse_root_count():
    path = make_path(2, "1/2", tau=20.0)
    bath = BathSpec(eta=1e-2, coupling="independent")
    small = run_ensemble(path, bath, config=TrajectoryConfig(n_trajectories=200, seed=3), s_grid=GRID)
    large = run_ensemble(path, bath, config=TrajectoryConfig(n_trajectories=400, seed=3), s_grid=GRID)
    ratio = small.stderr_ground_population[-1] / large.stderr_ground_population[-1]
    assert abs(ratio / math.sqrt(2) - 1) < 0.2
    ame = integrate_ame(path, bath, s_grid=GRID)
    assert abs(large.final_ground_population - ame.final_ground_population) < 4 * large.stderr_ground_population[-1]


def test_populations_normalized():
    path = make_path(3, "2/3", tau=30.0)
    for seed in range(5):
        rec = evolve_trajectory(path, BathSpec(eta=1e-2, coupling="independent"), seed=seed, s_grid=GRID)
        assert rec.max_population_error < 1e-9
        assert abs(np.sum(rec.final_populations) - 1.0) < 1e-12


def test_norm_increase_is_reported(monkeypatch):
    orig = LindbladSet.effective_correction

    def gain(self):
        diag, r, block = orig(self)
        return diag.real + 0.5j * self.loss_diag, r, block

    monkeypatch.setattr(LindbladSet, "effective_correction", gain)
    with pytest.raises(SolverError, match="norm increased"):
        evolve_trajectory(make_path(2, "1/2", tau=10.0), BathSpec(eta=1e-2, coupling="independent"),
                          s_grid=GRID)


_ORIGINAL_RUN = mcwf._Unraveler.run


def _failing_run(every):
    orig = _ORIGINAL_RUN

    def run(self, psi0, grid, rng, index=0):
        if index % every == 0:
            raise SolverError("injected")
        return orig(self, psi0, grid, rng, index)

    return run


def test_failed_fraction_threshold(monkeypatch):
    path = make_path(2, "1/2", tau=5.0)
    bath = BathSpec(eta=1e-2, coupling="independent")
    cfg = TrajectoryConfig(n_trajectories=200, seed=1)
    monkeypatch.setattr(mcwf._Unraveler, "run", _failing_run(150))
    res = run_ensemble(path, bath, config=cfg, s_grid=GRID)
    assert res.n_failed == 2 and res.n_trajectories == 200
    monkeypatch.setattr(mcwf._Unraveler, "run", _failing_run(40))
    with pytest.raises(SolverError, match="5 of 200"):
        run_ensemble(path, bath, config=cfg, s_grid=GRID)


def test_config_validation():
    with pytest.raises(DomainError):
        TrajectoryConfig(n_trajectories=0)
    with pytest.raises(DomainError):
        TrajectoryConfig(jump_resolution=1.5)
    with pytest.raises(DomainError):
        evolve_trajectory(make_path(2), BathSpec(eta=1e-3), psi0=np.array([1, 1, 0, 0], complex),
                          s_grid=GRID)


def test_csv_columns(tmp_path):
    path = make_path(2, "1/2", tau=5.0)
    res = run_ensemble(path, BathSpec(eta=1e-2, coupling="independent"),
                       config=TrajectoryConfig(n_trajectories=5), s_grid=GRID)
    res.write_csv(tmp_path / "pg.csv", config_hash="h")
    meta, rows = read_csv(tmp_path / "pg.csv")
    assert list(rows[0]) == ["s", "mean_pg", "stderr_pg"] and len(rows) == len(GRID)
    assert meta["config_hash"] == "h"
    res.write_populations_csv(tmp_path / "pops.csv")
    _, rows = read_csv(tmp_path / "pops.csv")
    assert [r["basis_label"] for r in rows] == ["00", "01", "10", "11"]
    assert sum(float(r["population"]) for r in rows) == pytest.approx(1.0)
