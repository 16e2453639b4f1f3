"""Monte Carlo wave-function unraveling of the adiabatic master equation.

Each trajectory evolves an unnormalized state under
``H_eff = H + H_LS - (i/2) sum_k L_k^dag L_k`` until its squared norm falls
to a uniform random threshold drawn beforehand. At that point one jump is
applied, the state is renormalized and a new threshold is drawn. The jump
operators and ``H_eff`` come from the eigenframe at the start of each
integrator step, exactly as in :func:`arasim.lindblad.integrate_ame`.

Random numbers for trajectory ``i`` come from a Philox stream keyed by
``seed + i``. Results are therefore independent of how trajectories are
distributed over worker processes, and ensemble averages are reduced in
trajectory order so repeated runs agree bit for bit.
"""

from __future__ import annotations

import logging
import math
import os
from collections import OrderedDict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from . import _engine
from ._engine import Frame, Representation, ground_overlap
from ._rk import StepControl, dopri5_step
from .bath import BathSpec, LambShiftTable
from .csvout import write_csv
from .errors import ArasimError, DomainError, NormUnderflowError, SolverError
from .lindblad import CouplingSet, build_couplings, davies_for_frame
from .model import HamiltonianPath, basis_label, initial_state

log = logging.getLogger(__name__)

MAX_FAILED_FRACTION = 0.01
NORM_FLOOR = 1e-250
_CACHE_BYTES = 64 * 2**20


@dataclass(frozen=True)
class TrajectoryConfig:
    n_trajectories: int = 5000
    seed: int = 0
    jump_resolution: float = 1e-9
    rtol: float = 1e-8
    atol: float = 1e-10
    h_max: float = 0.05
    min_overlap: float = 0.999

    def __post_init__(self):
        if int(self.n_trajectories) != self.n_trajectories or self.n_trajectories < 1:
            raise DomainError(f"n_trajectories must be a positive integer, got {self.n_trajectories}")
        if not 0 < self.jump_resolution < 1:
            raise DomainError("jump_resolution must lie in (0, 1)")

    def rng(self, index: int) -> np.random.Generator:
        """Independent stream for trajectory ``index``."""
        return np.random.Generator(np.random.Philox(key=(self.seed + index) % 2**64))


@dataclass(eq=False)
class TrajectoryRecord:
    index: int
    s: np.ndarray
    ground_population: np.ndarray
    final_state: np.ndarray
    jump_times: list[float]
    n_steps: int
    max_population_error: float

    @property
    def n_jumps(self) -> int:
        return len(self.jump_times)

    @property
    def final_populations(self) -> np.ndarray:
        return np.abs(self.final_state) ** 2


@dataclass(eq=False)
class EnsembleResult:
    """Trajectory averages.

    With a single trajectory the standard errors are undefined; they are
    then NaN and ``stderr_defined`` is False.
    """

    s: np.ndarray
    mean_ground_population: np.ndarray
    stderr_ground_population: np.ndarray
    final_populations: np.ndarray
    final_populations_stderr: np.ndarray
    labels: list[str]
    n_trajectories: int
    n_failed: int
    mean_jumps: float
    density: np.ndarray = field(repr=False)
    failures: list[str] = field(default_factory=list, repr=False)
    records: list[TrajectoryRecord] | None = field(default=None, repr=False)

    @property
    def stderr_defined(self) -> bool:
        return self.n_trajectories - self.n_failed > 1

    @property
    def final_ground_population(self) -> float:
        return float(self.mean_ground_population[-1])

    def write_csv(self, path, *, config_hash: str | None = None):
        rows = zip(self.s, self.mean_ground_population, self.stderr_ground_population)
        return write_csv(path, ("s", "mean_pg", "stderr_pg"), rows, config_hash=config_hash)

    def write_populations_csv(self, path, *, config_hash: str | None = None):
        rows = zip(self.labels, self.final_populations, self.final_populations_stderr)
        return write_csv(path, ("basis_label", "population", "stderr"), rows, config_hash=config_hash)


# ------------------------------------------------------------ engine


class _Unraveler:
    """Pure-state propagation along one Hamiltonian path.

    Frames and generators are cached by their exact ``s`` value; trajectories
    share the same step sequence until their first jump, so most of the
    eigen-decompositions are reused across an ensemble.
    """

    def __init__(self, path: HamiltonianPath, bath: BathSpec | None, couplings: CouplingSet | None,
                 tau: float, *, rtol: float, atol: float, h_max: float, min_overlap: float,
                 jump_resolution: float = 1e-9, freeze_at: float | None = None):
        if not tau > 0:
            raise DomainError(f"tau must be > 0, got {tau}")
        self.path = path
        self.tau = float(tau)
        self.open = bath is not None and bath.eta > 0
        if self.open and couplings is None:
            if path.basis is None:
                raise DomainError("couplings are required for a path without basis information")
            couplings = build_couplings(path.basis, bath.coupling)
        self.bath = bath
        ops = couplings.operators if self.open else ()
        self.rep = Representation.plain(path, ops, frozen_s=freeze_at)
        self.frozen = freeze_at is not None
        self.table = LambShiftTable(bath) if self.open and bath.lamb_shift else None
        self.ctrl = StepControl(rtol=rtol, atol=atol, h_max=h_max)
        self.min_overlap = min_overlap
        self.jump_resolution = jump_resolution
        dim = self.rep.dimension
        per_entry = 8 * dim * dim * (4 + 3 * max(1, len(ops)))
        self._cache: OrderedDict = OrderedDict()
        self._cache_size = max(8, _CACHE_BYTES // per_entry)

    def _prepared(self, s: float):
        hit = self._cache.get(s)
        if hit is not None:
            self._cache.move_to_end(s)
            return hit
        frame = self.rep.frame(s)
        pieces = None if self.frozen else self.rep.pieces_in_frame(frame)
        lset = davies_for_frame(self.rep, frame, self.bath, self.table) if self.open else None
        corr = lset.effective_correction() if lset is not None else None
        item = (frame, pieces, lset, corr)
        self._cache[s] = item
        if len(self._cache) > self._cache_size:
            self._cache.popitem(last=False)
        return item

    def _rhs(self, s0: float, frame: Frame, pieces, corr):
        """Interaction-picture derivative and the complex rate vector of that picture.

        The diagonal of ``H_eff`` in the frame at ``s0`` is integrated exactly;
        the Runge-Kutta stages only see the slow remainder.
        """
        tau, e = self.tau, frame.energies
        rep = self.rep
        rate = e if corr is None else e + corr[0]
        block = None if corr is None else corr[2]
        r = None if corr is None else corr[1]
        if pieces is None and block is None:
            return None, rate

        def f(d, y):
            ph = np.exp(1j * tau * rate * d)
            x = y / ph
            if pieces is not None:
                a, b, c = rep.coefficients(s0 + d)
                z = (a * pieces[0] + b * pieces[1] + c * pieces[2]) @ x - e * x
            else:
                z = None
            if block is not None:
                if z is None:
                    z = np.zeros_like(x)
                z[r] += block @ x[r]
            return (-1j * tau) * ph * z

        return f, rate

    def run(self, psi0: np.ndarray, s_grid: np.ndarray, rng: np.random.Generator | None,
            index: int = 0) -> TrajectoryRecord:
        psi0 = np.asarray(psi0, dtype=complex)
        if abs(np.linalg.norm(psi0) - 1.0) > 1e-10:
            raise DomainError("initial state must be normalized")
        if self.open and rng is None:
            raise DomainError("an open-system trajectory needs a random generator")
        ctrl = self.ctrl
        s = float(s_grid[0])
        frame, pieces, lset, corr = self._prepared(s)
        psi = frame.vectors.T @ psi0
        threshold = 1.0 - rng.random() if self.open else 0.0
        pg = [float(np.sum(np.abs(psi[frame.ground]) ** 2))]
        pop_err = 0.0
        jumps: list[float] = []
        h = None
        n_steps = 0
        for target in s_grid[1:]:
            while s < target - 1e-15:
                f, rate = self._rhs(s, frame, pieces, corr)
                if h is None:
                    h = ctrl.initial_step(psi, f(0.0, psi)) if f is not None else ctrl.h_max
                step = min(h, target - s)
                y5, err = _advance(f, psi, step)
                ratio = ctrl.error_ratio(psi, y5, err) if f is not None else 0.0
                if ratio > 1.0:
                    h = ctrl.shrink(step, ratio, s)
                    continue
                s_new = target if step == target - s else s + step
                new = self._prepared(s_new) if not self.frozen else (frame, pieces, lset, corr)
                if new[0] is not frame and ground_overlap(frame, new[0]) < self.min_overlap:
                    h = ctrl.halve(step, s)
                    continue
                back = np.exp(-1j * self.tau * rate * step)
                y5 = y5 * back
                n0 = float(np.vdot(psi, psi).real)
                n5 = float(np.vdot(y5, y5).real)
                if n5 > n0 * (1.0 + 100 * ctrl.rtol) + ctrl.atol:
                    raise SolverError(f"trajectory norm increased at s={s:.9g} ({n0:.12g} -> {n5:.12g})")
                if n5 < NORM_FLOOR:
                    raise NormUnderflowError(f"trajectory norm underflow at s={s:.9g}")
                n_steps += 1
                h_next = ctrl.next_step(step, ratio) if step >= h else max(h, ctrl.next_step(step, ratio))
                if self.open and n5 <= threshold:
                    d = self._locate_jump(f, rate, psi, step, threshold)
                    y = _advance(f, psi, d)[0] * np.exp(-1j * self.tau * rate * d)
                    y = lset.sample_jump(y, rng.random())
                    nrm = np.linalg.norm(y)
                    if not nrm > 0:
                        raise SolverError(f"jump produced a null state at s={s + d:.9g}")
                    y = y / nrm
                    threshold = 1.0 - rng.random()
                    s_jump = s + d
                    jumps.append(s_jump)
                    new = self._prepared(s_jump) if not self.frozen else new
                    s_new = s_jump
                else:
                    y = y5
                if new[0] is not frame:
                    y = (new[0].vectors.T @ frame.vectors) @ y
                psi = y
                frame, pieces, lset, corr = new
                s = s_new
                h = h_next
            nrm2 = float(np.vdot(psi, psi).real)
            pops = np.abs(psi) ** 2 / nrm2
            pop_err = max(pop_err, abs(float(pops.sum()) - 1.0))
            pg.append(float(np.sum(pops[frame.ground])))
        final = frame.vectors @ psi
        final /= np.linalg.norm(final)
        return TrajectoryRecord(index, np.asarray(s_grid), np.array(pg), final, jumps, n_steps, pop_err)

    def _locate_jump(self, f, rate, psi, step, threshold) -> float:
        def excess(d):
            y = _advance(f, psi, d)[0] * np.exp(-1j * self.tau * rate * d)
            return float(np.vdot(y, y).real) - threshold

        try:
            d, info = brentq(excess, 0.0, step, xtol=self.jump_resolution * step,
                             rtol=max(self.jump_resolution, 4 * np.finfo(float).eps),
                             full_output=True, disp=False)
        except ValueError as exc:
            raise SolverError(f"jump time bracketing failed: {exc}") from exc
        if not info.converged:
            raise SolverError(f"jump time root finding did not converge ({info.flag})")
        return max(d, 1e-300)


def _advance(f, y, h):
    """One Runge-Kutta step; ``f is None`` means the interaction picture is stationary."""
    if f is None:
        return y.copy(), None
    return dopri5_step(f, y, h)


# -------------------------------------------------------------- public API


def _grid(s_grid) -> np.ndarray:
    return _engine.output_grid(np.linspace(0, 1, 101) if s_grid is None else s_grid)


def evolve_trajectory(path: HamiltonianPath, bath: BathSpec, couplings: CouplingSet | None = None,
                      psi0: np.ndarray | None = None, tau: float | None = None,
                      config: TrajectoryConfig | None = None, seed: int | None = None, *,
                      s_grid: Sequence[float] | None = None,
                      freeze_at: float | None = None) -> TrajectoryRecord:
    """Run one trajectory.

    ``seed`` is the trajectory's own key; by default it is ``config.seed``.
    """
    config = config or TrajectoryConfig(n_trajectories=1)
    tau = path.spec.anneal_time if tau is None else tau
    psi0 = initial_state(path.spec, path.basis) if psi0 is None else psi0
    eng = _Unraveler(path, bath, couplings, tau, rtol=config.rtol, atol=config.atol,
                     h_max=config.h_max, min_overlap=config.min_overlap,
                     jump_resolution=config.jump_resolution, freeze_at=freeze_at)
    key = config.seed if seed is None else seed
    rng = np.random.Generator(np.random.Philox(key=key % 2**64))
    return eng.run(psi0, _grid(s_grid), rng)


def evolve_closed(path: HamiltonianPath, psi0: np.ndarray | None = None, tau: float | None = None,
                  s_grid: Sequence[float] | None = None, *, rtol: float = 1e-10, atol: float = 1e-12,
                  h_max: float = 0.05) -> TrajectoryRecord:
    """Schrodinger evolution; ``ground_population`` is the instantaneous ground weight."""
    tau = path.spec.anneal_time if tau is None else tau
    psi0 = initial_state(path.spec, path.basis) if psi0 is None else psi0
    eng = _Unraveler(path, None, None, tau, rtol=rtol, atol=atol, h_max=h_max, min_overlap=0.999)
    return eng.run(psi0, _grid(s_grid), None)


def _run_chunk(args):
    path, bath, couplings, psi0, tau, config, grid, freeze_at, indices = args
    eng = _Unraveler(path, bath, couplings, tau, rtol=config.rtol, atol=config.atol,
                     h_max=config.h_max, min_overlap=config.min_overlap,
                     jump_resolution=config.jump_resolution, freeze_at=freeze_at)
    out = []
    for i in indices:
        try:
            out.append(eng.run(psi0, grid, config.rng(i), index=i))
        except ArasimError as exc:
            out.append(f"trajectory {i}: {type(exc).__name__}: {exc}")
    return out


def default_workers() -> int:
    """Worker count from ``ARASIM_WORKERS``, else 1."""
    raw = os.environ.get("ARASIM_WORKERS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise DomainError(f"ARASIM_WORKERS must be an integer, got {raw!r}") from None


def run_ensemble(path: HamiltonianPath, bath: BathSpec, couplings: CouplingSet | None = None,
                 psi0: np.ndarray | None = None, tau: float | None = None,
                 config: TrajectoryConfig | None = None, *, s_grid: Sequence[float] | None = None,
                 freeze_at: float | None = None, workers: int | None = None,
                 keep_records: bool = False) -> EnsembleResult:
    """Average ``config.n_trajectories`` independent trajectories.

    Raises :class:`SolverError` when more than 1% of the trajectories fail.
    Failed trajectories are otherwise excluded and counted in ``n_failed``.
    With ``keep_records`` the per-trajectory records are kept on the result,
    so sub-ensembles can be re-averaged with :func:`aggregate`.
    """
    config = config or TrajectoryConfig()
    tau = path.spec.anneal_time if tau is None else float(tau)
    psi0 = initial_state(path.spec, path.basis) if psi0 is None else np.asarray(psi0, complex)
    grid = _grid(s_grid)
    if bath.eta > 0 and couplings is None:
        couplings = build_couplings(path.basis, bath.coupling)
    k = config.n_trajectories
    workers = default_workers() if workers is None else max(1, int(workers))
    n_chunks = min(k, workers * 4) if workers > 1 else 1
    bounds = np.linspace(0, k, n_chunks + 1).astype(int)
    jobs = [(path, bath, couplings, psi0, tau, config, grid, freeze_at, range(a, b))
            for a, b in zip(bounds[:-1], bounds[1:])]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_run_chunk, jobs))
    else:
        chunks = [_run_chunk(j) for j in jobs]
    results = [r for chunk in chunks for r in chunk]
    failures = [r for r in results if isinstance(r, str)]
    records = [r for r in results if not isinstance(r, str)]
    if len(failures) > MAX_FAILED_FRACTION * k or not records:
        detail = failures[0] if failures else ""
        raise SolverError(f"{len(failures)} of {k} trajectories failed; first: {detail}")
    for msg in failures:
        log.warning(msg)
    res = aggregate(records, path, n_requested=k, failures=failures)
    if keep_records:
        res.records = records
    return res


def aggregate(records: Sequence[TrajectoryRecord], path: HamiltonianPath, *, n_requested: int | None = None,
              failures: Sequence[str] = ()) -> EnsembleResult:
    """Ensemble statistics of ``records``, reduced in the order given."""
    if not records:
        raise DomainError("no trajectory records to aggregate")
    grid = records[0].s
    k = len(records) + len(failures) if n_requested is None else n_requested
    n = len(records)
    pg = np.array([r.ground_population for r in records])
    pops = np.array([r.final_populations for r in records])
    finals = np.array([r.final_state for r in records])
    density = np.einsum("ki,kj->ij", finals, finals.conj()) / n
    if n > 1:
        se_pg = pg.std(axis=0, ddof=1) / math.sqrt(n)
        se_pop = pops.std(axis=0, ddof=1) / math.sqrt(n)
    else:
        se_pg = np.full(len(grid), np.nan)
        se_pop = np.full(pops.shape[1], np.nan)
    labels = ([basis_label(path.basis, i) for i in range(pops.shape[1])] if path.basis is not None
              else [str(i) for i in range(pops.shape[1])])
    return EnsembleResult(grid, pg.mean(axis=0), se_pg, pops.mean(axis=0), se_pop, labels, k,
                          len(failures), float(np.mean([r.n_jumps for r in records])), density,
                          list(failures))


__all__ = ["TrajectoryConfig", "TrajectoryRecord", "EnsembleResult", "evolve_trajectory",
           "evolve_closed", "run_ensemble", "aggregate", "default_workers"]
