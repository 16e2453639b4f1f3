"""Success probability, time to solution and scaling-model fits."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import least_squares
from scipy.special import logsumexp

from .csvout import write_csv
from .errors import BasisMismatchError, DomainError, FitError
from .model import BasisRep

DEFAULT_P_D = 0.99


# ------------------------------------------------------- success probability


def success_probability(state, basis: BasisRep | None = None):
    """Weight of the all-up configuration.

    ``state`` may be a :class:`~arasim.lindblad.DensityMatrix`, a density
    matrix or state vector together with ``basis``, or an
    :class:`~arasim.mcwf.EnsembleResult`. Ensembles return ``(mean, stderr)``.
    """
    from .lindblad import DensityMatrix
    from .mcwf import EnsembleResult

    if isinstance(state, EnsembleResult):
        if basis is None:
            raise BasisMismatchError("an ensemble result needs the basis it was computed in")
        _check_dim(basis, len(state.final_populations))
        t = basis.target_index
        return float(state.final_populations[t]), float(state.final_populations_stderr[t])
    if isinstance(state, DensityMatrix):
        if basis is None:
            basis = state.basis
        elif state.basis is not None and state.basis != basis:
            raise BasisMismatchError("density matrix belongs to a different basis")
        state = state.matrix
    if basis is None:
        raise BasisMismatchError("the basis of the state is unknown")
    arr = np.asarray(state)
    _check_dim(basis, arr.shape[0])
    t = basis.target_index
    if arr.ndim == 1:
        return float(abs(arr[t]) ** 2 / np.vdot(arr, arr).real)
    return float(arr[t, t].real)


def _check_dim(basis: BasisRep, dim: int) -> None:
    if dim != basis.dimension:
        raise BasisMismatchError(f"state has dimension {dim}, basis has {basis.dimension}")


def instantaneous_ground_population(rho: np.ndarray, hamiltonian: np.ndarray, *,
                                    rtol: float = 1e-8) -> float:
    """Weight of ``rho`` on the (possibly degenerate) ground space of ``hamiltonian``."""
    e, v = np.linalg.eigh(hamiltonian)
    g = v[:, e <= e[0] + rtol * max(1.0, abs(e[0]))]
    rho = np.asarray(rho)
    if rho.ndim == 1:
        rho = np.outer(rho, rho.conj()) / np.vdot(rho, rho).real
    return float(np.trace(g.conj().T @ rho @ g).real)


# -------------------------------------------------------------------- TTS


class TTSFlag(str, enum.Enum):
    FINITE = "finite"
    INFINITE = "infinite"
    SUB_SINGLE_RUN = "sub_single_run"


@dataclass(frozen=True)
class TTSRecord:
    tau: float
    p_g: float
    tts: float
    flag: TTSFlag
    p_d: float = DEFAULT_P_D
    p_g_stderr: float = math.nan
    tts_stderr: float = math.nan

    @property
    def p_e(self) -> float:
        return 1.0 - self.p_g


def tts(tau: float, p_g: float, p_d: float = DEFAULT_P_D, p_g_stderr: float | None = None) -> TTSRecord:
    """Time to reach the target at least once with probability ``p_d``.

    ``tau * log(1 - p_d) / log(1 - p_g)``. A run that never succeeds is
    flagged ``INFINITE``; one whose single-run success already exceeds
    ``p_d`` is flagged ``SUB_SINGLE_RUN`` and still carries the formula
    value, which is then below ``tau``. The uncertainty is propagated to
    first order from ``p_g_stderr``.
    """
    if not (tau > 0 and math.isfinite(tau)):
        raise DomainError(f"tau must be a positive finite number, got {tau}")
    if not 0.0 <= p_g <= 1.0:
        raise DomainError(f"p_g must lie in [0, 1], got {p_g}")
    if not 0.0 < p_d < 1.0:
        raise DomainError(f"p_d must lie in (0, 1), got {p_d}")
    if p_g_stderr is not None and not p_g_stderr >= 0:
        raise DomainError(f"p_g_stderr must be >= 0, got {p_g_stderr}")
    se = math.nan if p_g_stderr is None else float(p_g_stderr)
    p_e = 1.0 - p_g
    if p_e == 1.0:
        return TTSRecord(tau, p_g, math.inf, TTSFlag.INFINITE, p_d, se, math.nan)
    if p_e == 0.0:
        return TTSRecord(tau, p_g, 0.0, TTSFlag.SUB_SINGLE_RUN, p_d, se, 0.0 if se == se else math.nan)
    log_pe = math.log(p_e)
    value = tau * math.log(1.0 - p_d) / log_pe
    flag = TTSFlag.SUB_SINGLE_RUN if p_e < 1.0 - p_d else TTSFlag.FINITE
    dt = abs(tau * math.log(1.0 - p_d) / (p_e * log_pe**2)) * se
    return TTSRecord(tau, p_g, value, flag, p_d, se, dt)


def write_tts_csv(path, records: Iterable[TTSRecord], *, config_hash: str | None = None):
    cols = ("tau", "p_g", "p_g_stderr", "tts", "tts_stderr", "flag")
    rows = ((r.tau, r.p_g, r.p_g_stderr, r.tts, r.tts_stderr, r.flag.value) for r in records)
    return write_csv(path, cols, rows, config_hash=config_hash)


def plateau_tts(tau_ad: float, p_d: float = DEFAULT_P_D) -> float:
    """Time to solution in the Landau-Zener regime, independent of ``tau``."""
    return -4.0 * tau_ad * math.log(1.0 - p_d) / math.pi


def thermal_ground_weight(energies: Sequence[float], beta: float,
                          degeneracies: Sequence[int] | None = None) -> float:
    """Boltzmann weight of the lowest level among ``energies`` (with optional multiplicities)."""
    e = np.asarray(energies, dtype=float)
    g = np.ones_like(e) if degeneracies is None else np.asarray(degeneracies, dtype=float)
    logw = -beta * e + np.log(g)
    ground = np.isclose(e, e.min(), rtol=0, atol=1e-9 * max(1.0, abs(e.min())))
    return float(np.exp(logsumexp(logw[ground]) - logsumexp(logw)))


# ---------------------------------------------------------------- scaling


class ScalingModel(str, enum.Enum):
    LANDAU_ZENER = "landau_zener"
    PLATEAU = "plateau"
    POWER_LAW = "power_law"
    THERMAL_TAIL = "thermal_tail"


@dataclass(frozen=True)
class ScalingFit:
    model: ScalingModel
    parameters: dict
    residual: float
    n_points: int

    def error_probability(self, tau) -> np.ndarray:
        """Fitted ``p_e`` at ``tau`` (not defined for the plateau model)."""
        tau = np.asarray(tau, dtype=float)
        p = self.parameters
        if self.model is ScalingModel.LANDAU_ZENER:
            return np.exp(-math.pi * tau / (4.0 * p["tau_ad"]))
        if self.model is ScalingModel.POWER_LAW:
            return (tau / p["tau_ad"]) ** (-p["alpha"])
        if self.model is ScalingModel.THERMAL_TAIL:
            return thermal_tail_error(tau, p["p_T"], p["T1"], p["alpha"], p["tau_ad"])
        raise FitError("the plateau model has no error-probability curve")

    def tts(self, tau, p_d: float = DEFAULT_P_D) -> np.ndarray:
        tau = np.asarray(tau, dtype=float)
        if self.model is ScalingModel.PLATEAU:
            return np.full_like(tau, self.parameters["tts_star"])
        return tau * math.log(1.0 - p_d) / np.log(self.error_probability(tau))


def thermal_tail_error(tau, p_t: float, t1: float, alpha: float, tau_ad: float) -> np.ndarray:
    """``1 - [p_T + (p_closed - p_T) exp(-tau / T1)]`` with ``p_closed = 1 - (alpha tau / tau_ad)^-2``.

    ``p_closed`` is clipped to ``[0, 1]``; the power law is only meaningful
    where ``alpha tau > tau_ad``.
    """
    tau = np.asarray(tau, dtype=float)
    p_closed = np.clip(1.0 - (alpha * tau / tau_ad) ** -2.0, 0.0, 1.0)
    return 1.0 - (p_t + (p_closed - p_t) * np.exp(-tau / t1))


def _points(records) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
    taus, pes, ttss = [], [], []
    for r in records:
        if isinstance(r, TTSRecord):
            taus.append(r.tau)
            pes.append(r.p_e)
            ttss.append(r.tts)
        else:
            t, pe = r
            taus.append(float(t))
            pes.append(float(pe))
            ttss.append(math.nan)
    return np.array(taus), np.array(pes), np.array(ttss)


_N_PARAMS = {ScalingModel.LANDAU_ZENER: 1, ScalingModel.PLATEAU: 1, ScalingModel.POWER_LAW: 2,
             ScalingModel.THERMAL_TAIL: 3}


def fit_scaling(records, model: ScalingModel | str, *, p_d: float = DEFAULT_P_D,
                tau_ad: float | None = None, h0_energies: Sequence[float] | None = None,
                h0_degeneracies: Sequence[int] | None = None, initial: dict | None = None) -> ScalingFit:
    """Least-squares fit of one scaling model.

    ``records`` holds :class:`TTSRecord` objects or ``(tau, p_e)`` pairs.
    Landau-Zener and power-law fits work on ``log p_e``; the thermal-tail
    fit works on ``p_e`` and needs ``tau_ad`` plus the energies of the
    problem Hamiltonian, from which ``p_T`` follows at the fitted ``beta*``.
    The plateau fit is the least-squares constant through finite TTS values.
    """
    model = ScalingModel(model)
    tau, p_e, tts_vals = _points(records)
    need = _N_PARAMS[model] + 1
    if len(tau) < need:
        raise FitError(f"{model.value} fit needs at least {need} points, got {len(tau)}")
    if np.any(tau <= 0):
        raise FitError("all tau values must be positive")
    guess = initial or {}

    if model is ScalingModel.PLATEAU:
        finite = np.isfinite(tts_vals)
        if finite.sum() < need:
            raise FitError("plateau fit needs finite TTS values")
        star = float(np.mean(tts_vals[finite]))
        res = float(np.sum((tts_vals[finite] - star) ** 2))
        return ScalingFit(model, {"tts_star": star}, res, int(finite.sum()))

    if model in (ScalingModel.LANDAU_ZENER, ScalingModel.POWER_LAW):
        ok = (p_e > 0) & (p_e < 1)
        if ok.sum() < need:
            raise FitError(f"{model.value} fit needs p_e strictly inside (0, 1)")
        t, y = tau[ok], np.log(p_e[ok])
        if model is ScalingModel.LANDAU_ZENER:
            slope = np.sum(t * y) / np.sum(t * t)
            x0 = [math.log(guess.get("tau_ad", -math.pi / (4 * slope) if slope < 0 else 1.0))]

            def resid(x):
                return -math.pi * t / (4 * math.exp(x[0])) - y
        else:
            a, b = np.polyfit(np.log(t), y, 1)
            alpha0 = guess.get("alpha", -a if a < 0 else 1.0)
            x0 = [math.log(alpha0), math.log(guess.get("tau_ad", math.exp(b / alpha0)))]

            def resid(x):
                return -math.exp(x[0]) * (np.log(t) - x[1]) - y
        sol = _solve(resid, x0, model)
        if model is ScalingModel.LANDAU_ZENER:
            params = {"tau_ad": math.exp(sol.x[0])}
            params["tts_star"] = plateau_tts(params["tau_ad"], p_d)
        else:
            params = {"alpha": math.exp(sol.x[0]), "tau_ad": math.exp(sol.x[1])}
        return ScalingFit(model, params, float(2 * sol.cost), int(ok.sum()))

    if tau_ad is None or h0_energies is None:
        raise FitError("the thermal-tail fit needs tau_ad and the problem-Hamiltonian energies")
    energies = np.asarray(h0_energies, dtype=float)

    def unpack(x):
        beta, t1, alpha = (float(v) for v in np.exp(x))
        return thermal_ground_weight(energies, beta, h0_degeneracies), t1, alpha, beta

    def resid(x):
        p_t, t1, alpha, _ = unpack(x)
        return thermal_tail_error(tau, p_t, t1, alpha, tau_ad) - p_e

    x0 = np.log([guess.get("beta", 1.0), guess.get("T1", float(np.median(tau))), guess.get("alpha", 1.0)])
    best = None
    for shift in (0.0, -1.0, 1.0):
        start = x0 + np.array([shift, 0.0, 0.0])
        try:
            sol = _solve(resid, start, model)
        except FitError:
            continue
        if best is None or sol.cost < best.cost:
            best = sol
    if best is None:
        raise FitError("thermal-tail fit did not converge from any starting point")
    p_t, t1, alpha, beta = unpack(best.x)
    params = {"p_T": p_t, "beta": beta, "T1": t1, "alpha": alpha, "tau_ad": float(tau_ad)}
    return ScalingFit(model, params, float(2 * best.cost), len(tau))


def _solve(resid, x0, model):
    try:
        sol = least_squares(resid, x0, method="lm", xtol=1e-14, ftol=1e-14, gtol=1e-14, max_nfev=20000)
    except (ValueError, FloatingPointError) as exc:
        raise FitError(f"{model.value} fit failed: {exc}") from exc
    if not sol.success or not np.all(np.isfinite(sol.x)):
        raise FitError(f"{model.value} fit did not converge: {sol.message} (status {sol.status})")
    return sol


__all__ = ["DEFAULT_P_D", "success_probability", "instantaneous_ground_population", "TTSFlag",
           "TTSRecord", "tts", "write_tts_csv", "plateau_tts", "thermal_ground_weight",
           "ScalingModel", "ScalingFit", "thermal_tail_error", "fit_scaling"]
