"""Ohmic bath: transition rates and the Lamb-shift kernel.

The rate for a transition that lowers the system energy by ``omega`` is

    gamma(omega) = 2 pi eta omega exp(-|omega|/omega_c) / (1 - exp(-beta omega))

and the principal-value kernel ``S(omega)`` is its Hilbert transform over
the window ``|nu| <= 20 omega_c``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate, interpolate

from .errors import DomainError, SolverError

DEFAULT_TEMPERATURE = 1.57
DEFAULT_CUTOFF = 8 * math.pi
LAMB_WINDOW = 20.0


class CouplingKind(str, enum.Enum):
    COLLECTIVE = "collective"
    INDEPENDENT = "independent"


@dataclass(frozen=True)
class BathSpec:
    eta: float = 1e-4
    omega_c: float = DEFAULT_CUTOFF
    temperature: float = DEFAULT_TEMPERATURE
    coupling: CouplingKind = CouplingKind.COLLECTIVE
    lamb_shift: bool = True

    def __post_init__(self):
        object.__setattr__(self, "coupling", CouplingKind(self.coupling))
        if not self.eta >= 0:
            raise DomainError(f"eta must be >= 0, got {self.eta}")
        if not self.omega_c > 0:
            raise DomainError(f"omega_c must be > 0, got {self.omega_c}")
        if not self.temperature > 0:
            raise DomainError(f"temperature must be > 0, got {self.temperature}")

    @property
    def beta(self) -> float:
        return 1.0 / self.temperature

    def with_eta(self, eta: float) -> "BathSpec":
        from dataclasses import replace

        return replace(self, eta=eta)


def _unit_rate(omega, beta: float, omega_c: float):
    """Rate spectrum for ``eta = 1``; finite at ``omega = 0`` and overflow-free."""
    w = np.asarray(omega, dtype=float)
    x = beta * np.abs(w)
    out = np.empty_like(w)
    small = x < 1e-8
    big = ~small
    denom = -np.expm1(-x[big])
    aw = np.abs(w[big])
    cut = np.exp(-aw / omega_c)
    # for omega < 0 the Boltzmann factor exp(-x) is applied explicitly
    boltz = np.where(w[big] > 0, 1.0, np.exp(-x[big]))
    out[big] = aw * cut * boltz / denom
    ws = w[small]
    # series of w / (1 - exp(-beta w)) about 0, times the cutoff factor
    out[small] = (1 / beta + ws / 2 + beta * ws**2 / 12) * np.exp(-np.abs(ws) / omega_c)
    return 2 * math.pi * out


def _scalar_rate(beta: float, omega_c: float):
    """Pure-Python version of :func:`_unit_rate` for quadrature integrands."""
    two_pi = 2 * math.pi

    def f(w: float) -> float:
        x = beta * abs(w)
        if x < 1e-8:
            return two_pi * (1 / beta + w / 2) * math.exp(-abs(w) / omega_c)
        val = abs(w) * math.exp(-abs(w) / omega_c) / -math.expm1(-x)
        return two_pi * (val if w > 0 else val * math.exp(-x))

    return f


def gamma(bath: BathSpec, omega):
    """Transition rate at Bohr frequency ``omega`` (scalar or array)."""
    out = bath.eta * _unit_rate(omega, bath.beta, bath.omega_c)
    return float(out) if np.ndim(omega) == 0 else out


def _pv_quad(omega: float, beta: float, omega_c: float, rtol: float) -> float:
    lim = LAMB_WINDOW * omega_c

    f = _scalar_rate(beta, omega_c)

    kw = dict(epsabs=0.0, epsrel=rtol, limit=400, full_output=1)
    if -lim < omega < lim:
        # quad's Cauchy weight computes PV int f(nu) / (nu - omega)
        pieces = [(-lim, omega - 1.0), (omega - 1.0, omega + 1.0), (omega + 1.0, lim)]
        total = 0.0
        for a, b in pieces:
            a, b = max(a, -lim), min(b, lim)
            if b <= a:
                continue
            if a < omega < b:
                res = integrate.quad(f, a, b, weight="cauchy", wvar=omega, **kw)
            else:
                res = integrate.quad(lambda nu: f(nu) / (nu - omega), a, b, **kw)
            _check(res, omega, rtol)
            total += res[0]
        return -total / (2 * math.pi)
    res = integrate.quad(lambda nu: f(nu) / (omega - nu), -lim, lim, **kw)
    _check(res, omega, rtol)
    return res[0] / (2 * math.pi)


def _check(res, omega, rtol):
    # quad appends a message only when it could not certify its tolerance
    if len(res) == 4 and res[1] > max(10 * rtol * abs(res[0]), 1e-14):
        raise SolverError(f"Lamb-shift quadrature did not converge at omega={omega}: {res[3]}")


def lamb_kernel(bath: BathSpec, omega, *, rtol: float = 1e-6):
    """Principal-value kernel ``S(omega)`` by adaptive quadrature."""
    vals = [bath.eta * _pv_quad(float(w), bath.beta, bath.omega_c, rtol)
            for w in np.atleast_1d(omega)]
    return vals[0] if np.ndim(omega) == 0 else np.array(vals)


@lru_cache(maxsize=16)
def _lamb_table(beta: float, omega_c: float, half_width: float):
    # uniform knots plus a geometric cluster at 0, where exp(-|nu|/omega_c) has a kink
    h = 0.05
    cluster = np.logspace(-7, math.log10(2 * h), 40)
    knots = np.unique(np.concatenate([np.arange(-half_width, half_width + h / 2, h),
                                      cluster, -cluster, [0.0]]))
    vals = np.array([_pv_quad(x, beta, omega_c, 1e-10) for x in knots])
    return interpolate.CubicSpline(knots, vals)


class LambShiftTable:
    """Spline of ``S(omega)`` for fast evaluation on many Bohr frequencies.

    The table covers ``|omega| <= half_width`` and doubles its range when a
    wider frequency is requested. Values agree with :func:`lamb_kernel` to
    about 2e-7 relative.
    """

    def __init__(self, bath: BathSpec, half_width: float = 16.0):
        self.bath = bath
        self._half_width = float(half_width)

    def __call__(self, omega) -> np.ndarray:
        w = np.asarray(omega, dtype=float)
        need = float(np.max(np.abs(w))) if w.size else 0.0
        while need > self._half_width:
            self._half_width *= 2
        spline = _lamb_table(self.bath.beta, self.bath.omega_c, self._half_width)
        return self.bath.eta * spline(w)


def kms_ratio(bath: BathSpec, omega):
    """``gamma(-omega) / (exp(-beta omega) gamma(omega))``; equals 1 by detailed balance."""
    w = np.asarray(omega, dtype=float)
    return gamma(bath, -w) / (np.exp(-bath.beta * w) * gamma(bath, w))
