"""Instantaneous spectra, gaps and adiabatic timescales."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np
import scipy.linalg as sla
from scipy import optimize

from .csvout import write_csv
from .errors import DegenerateGapError, DomainError, SolverError
from .model import AnnealSpec, BasisKind, HamiltonianPath, build_basis, build_operators

log = logging.getLogger(__name__)

DEGENERACY_RTOL = 1e-8
DEFAULT_EXPORT_LEVELS = 16


def degenerate_levels(energies: np.ndarray, rtol: float = DEGENERACY_RTOL) -> np.ndarray:
    """Integer level labels; sorted energies closer than ``rtol * max(1, |E|)`` share one."""
    e = np.asarray(energies)
    order = np.argsort(e, kind="stable")
    es = e[order]
    new = np.empty(len(es), dtype=bool)
    new[:1] = True
    new[1:] = np.diff(es) > rtol * np.maximum(1.0, np.abs(es[1:]))
    labels = np.empty(len(es), dtype=int)
    labels[order] = np.cumsum(new) - 1
    return labels


@dataclass(frozen=True, eq=False)
class EigFrame:
    """Eigen-decomposition of ``H(s)`` with energies ascending.

    ``phase_aligned`` records whether column signs were matched to a
    previous frame; otherwise each column has its largest-magnitude
    entry positive.
    """

    s: float
    energies: np.ndarray
    vectors: np.ndarray
    phase_aligned: bool = False

    @property
    def levels(self) -> np.ndarray:
        return degenerate_levels(self.energies)

    @property
    def gap(self) -> float:
        return float(self.energies[1] - self.energies[0])


def _fix_gauge(vectors: np.ndarray, energies: np.ndarray, prev: EigFrame | None):
    v = vectors.copy()
    if prev is None:
        pivot = np.argmax(np.abs(v), axis=0)
        signs = np.sign(v[pivot, np.arange(v.shape[1])])
        return v * np.where(signs == 0, 1, signs)
    labels = degenerate_levels(energies)
    for lev in np.unique(labels):
        cols = np.flatnonzero(labels == lev)
        if len(cols) > 1:
            # order degenerate columns by overlap with the previous frame, ties by pivot index
            ov = np.abs(prev.vectors[:, cols].T @ v[:, cols])
            best = ov.argmax(axis=0)
            pivot = np.argmax(np.abs(v[:, cols]), axis=0)
            v[:, cols] = v[:, cols[np.lexsort((pivot, best))]]
        for c in cols:
            ov = prev.vectors[:, c] @ v[:, c]
            if ov.real < 0:
                v[:, c] = -v[:, c]
    return v


def eig_at(path: HamiltonianPath, s: float, prev: EigFrame | None = None) -> EigFrame:
    h = path.at(s)
    try:
        e, v = np.linalg.eigh(h)
    except np.linalg.LinAlgError as exc:
        raise SolverError(f"eigensolver failed at s={s}") from exc
    return EigFrame(float(s), e, _fix_gauge(v, e, prev), prev is not None)


def eig_path(path: HamiltonianPath, s_grid: Sequence[float]) -> list[EigFrame]:
    """Frames along ``s_grid`` with column phases continued from point to point."""
    frames: list[EigFrame] = []
    for s in s_grid:
        frames.append(eig_at(path, s, frames[-1] if frames else None))
    return frames


def lowest_energies(path: HamiltonianPath, s: float, count: int = 2) -> np.ndarray:
    count = min(count, path.dimension)
    return sla.eigh(path.at(s), eigvals_only=True, subset_by_index=[0, count - 1])


def gap_at(path: HamiltonianPath, s: float) -> float:
    e = lowest_energies(path, s, 2)
    return float(e[1] - e[0])


@dataclass(frozen=True)
class GapProfile:
    s: np.ndarray
    gaps: np.ndarray
    s_min: float
    gap_min: float


def gap_profile(path: HamiltonianPath, s_grid: Sequence[float] | None = None, *,
                refine: bool = True, rtol: float = 1e-6) -> GapProfile:
    """Gap ``E1 - E0`` on ``s_grid`` and its minimum, refined by golden section."""
    s = np.linspace(0, 1, 101) if s_grid is None else np.asarray(s_grid, dtype=float)
    gaps = np.array([gap_at(path, x) for x in s])
    k = int(np.argmin(gaps))
    s_min, g_min = float(s[k]), float(gaps[k])
    if refine and 0 < k < len(s) - 1:
        res = optimize.minimize_scalar(lambda x: gap_at(path, x), method="golden",
                                       bracket=(s[k - 1], s[k], s[k + 1]), tol=rtol)
        if res.fun <= g_min:
            s_min, g_min = float(res.x), float(res.fun)
    return GapProfile(s, gaps, s_min, g_min)


@dataclass(frozen=True)
class LogFit:
    """Least-squares line ``log(gap) = intercept + slope * x``."""

    model: str
    intercept: float
    slope: float
    rss: float


def _line_fit(model: str, x: np.ndarray, y: np.ndarray) -> LogFit:
    coef, res, *_ = np.polyfit(x, y, 1, full=True)
    rss = float(res[0]) if len(res) else 0.0
    return LogFit(model, float(coef[1]), float(coef[0]), rss)


@dataclass(frozen=True)
class GapScaling:
    n_qubits: np.ndarray
    gap_min: np.ndarray
    s_min: np.ndarray
    exponential: LogFit
    polynomial: LogFit

    @property
    def prefers_exponential(self) -> bool:
        return self.exponential.rss < self.polynomial.rss


def gap_scaling(n_values: Sequence[int], *, p_power: int = 3, up_fraction=1,
                gamma_over_j: float = 1.0, schedule_exponent: float = 1.0,
                basis: BasisKind | str = BasisKind.DICKE, n_grid: int = 41,
                n_down: int | None = None) -> GapScaling:
    """Minimum gap versus ``N`` with exponential and power-law fits in log space.

    The initial state has a fixed up fraction ``up_fraction``, or, when
    ``n_down`` is given, a fixed number of down spins at every size.
    The exponential model is linear in ``N``; the polynomial model is linear
    in ``log N``. The residual sums of squares are comparable directly.
    """
    ns = np.array(sorted(int(n) for n in n_values))
    if n_down is not None and np.any(ns < n_down):
        raise DomainError(f"every N must be at least n_down={n_down}")
    gmin, smin = [], []
    for n in ns:
        c = Fraction(int(n) - n_down, int(n)) if n_down is not None else up_fraction
        spec = AnnealSpec(n, p_power, c, gamma_over_j, schedule_exponent)
        path = build_operators(spec, build_basis(spec, basis))
        prof = gap_profile(path, np.linspace(0, 1, n_grid))
        log.debug("N=%d gap_min=%.3e at s=%.5f", n, prof.gap_min, prof.s_min)
        gmin.append(prof.gap_min)
        smin.append(prof.s_min)
    g = np.array(gmin)
    if np.any(g <= 0):
        raise DegenerateGapError("non-positive minimum gap cannot be fit on a log scale")
    y = np.log(g)
    return GapScaling(ns, g, np.array(smin), _line_fit("exponential", ns.astype(float), y),
                      _line_fit("polynomial", np.log(ns), y))


def adiabatic_timescale(path: HamiltonianPath, s_min: float | None = None, *,
                        h: float = 1e-5, min_gap: float = 1e-12) -> float:
    """``|<E1|dH/ds|E0>| / gap**2`` at the minimum-gap point.

    The derivative is a central finite difference with step ``h``.
    """
    if s_min is None:
        s_min = gap_profile(path).s_min
    if not 0 <= s_min <= 1:
        raise DomainError(f"s_min must lie in [0, 1], got {s_min}")
    e, v = np.linalg.eigh(path.at(s_min))
    gap = e[1] - e[0]
    if gap < min_gap:
        raise DegenerateGapError(f"gap {gap:.3e} below {min_gap:.0e}; timescale undefined")
    lo, hi = max(0.0, s_min - h), min(1.0, s_min + h)
    dh = (path.at(hi) - path.at(lo)) / (hi - lo)
    return float(abs(v[:, 1] @ dh @ v[:, 0]) / gap**2)


def write_spectrum_csv(path: HamiltonianPath, s_grid: Sequence[float], out, *,
                       n_levels: int = DEFAULT_EXPORT_LEVELS, config_hash: str | None = None):
    """Lowest ``n_levels`` energies versus ``s``; columns ``s, E_0, E_1, ...``."""
    k = min(n_levels, path.dimension)
    rows = []
    for s in s_grid:
        e = lowest_energies(path, float(s), k)
        rows.append([float(s), *[float(x) for x in e]])
    cols = ["s", *[f"E_{i}" for i in range(k)]]
    return write_csv(out, cols, rows, config_hash=config_hash)


def write_gap_csv(profile: GapProfile, out, *, config_hash: str | None = None):
    """Sampled gap with the refined minimum inserted in ``s`` order."""
    rows = {float(s): float(g) for s, g in zip(profile.s, profile.gaps)}
    rows.setdefault(float(profile.s_min), float(profile.gap_min))
    return write_csv(out, ["s", "gap"], sorted(rows.items()), config_hash=config_hash)


def write_scaling_csv(scaling: GapScaling, out, *, config_hash: str | None = None):
    rows = [[int(n), float(g), float(s)] for n, g, s in zip(scaling.n_qubits, scaling.gap_min, scaling.s_min)]
    return write_csv(out, ["N", "min_gap", "s_min"], rows, config_hash=config_hash)


def endpoint_gap_formula(n_qubits: int, p_power: int) -> float:
    """Gap of ``H0`` between the all-up state and a single flip."""
    return n_qubits * (1 - (1 - 2 / n_qubits) ** p_power)


__all__ = [
    "EigFrame", "GapProfile", "GapScaling", "LogFit", "adiabatic_timescale",
    "degenerate_levels", "eig_at", "eig_path", "endpoint_gap_formula", "gap_at",
    "gap_profile", "gap_scaling", "lowest_energies", "write_gap_csv", "write_scaling_csv", "write_spectrum_csv",
]
