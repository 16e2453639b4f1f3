"""Dormand-Prince 5(4) step and step-size control.

The steppers in :mod:`arasim.lindblad` and :mod:`arasim.mcwf` integrate in
a rotating frame that is rebuilt at every step, so they drive this single
step function directly rather than a black-box ODE solver. The error
norm is the Euclidean (Frobenius) norm, which is invariant under unitary
changes of basis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import StepSizeError

_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_B = _A[6] + (0.0,)
_B4 = (5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40)
_E = tuple(b - b4 for b, b4 in zip(_B, _B4))


def dopri5_step(f, y: np.ndarray, h: float):
    """One step of size ``h`` for ``dy/dt = f(t, y)`` from ``t = 0``.

    Returns the fifth-order solution and the embedded error vector.
    """
    k = [f(0.0, y)]
    for i in range(1, 7):
        yi = y.copy()
        for a, kj in zip(_A[i], k):
            if a:
                yi += (h * a) * kj
        k.append(f(_C[i] * h, yi))
    y5 = y.copy()
    for b, kj in zip(_B, k):
        if b:
            y5 += (h * b) * kj
    err = sum((h * e) * kj for e, kj in zip(_E, k) if e)
    return y5, err


@dataclass
class StepControl:
    rtol: float = 1e-8
    atol: float = 1e-10
    h_min: float = 1e-14
    h_max: float = 0.05
    safety: float = 0.9

    def error_ratio(self, y: np.ndarray, y_new: np.ndarray, err: np.ndarray) -> float:
        scale = self.atol + self.rtol * max(np.linalg.norm(y), np.linalg.norm(y_new))
        return float(np.linalg.norm(err) / scale)

    def next_step(self, h: float, ratio: float) -> float:
        if ratio == 0.0:
            factor = 5.0
        else:
            factor = min(5.0, max(0.2, self.safety * ratio ** -0.2))
        return min(self.h_max, h * factor)

    def shrink(self, h: float, ratio: float, where: float) -> float:
        h_new = h * max(0.1, min(0.5, self.safety * ratio ** -0.2)) if ratio > 0 else h / 2
        if h_new < self.h_min:
            raise StepSizeError(f"step size underflow at s={where:.12g} (h={h_new:.3e})")
        return h_new

    def halve(self, h: float, where: float) -> float:
        if h / 2 < self.h_min:
            raise StepSizeError(f"step size underflow at s={where:.12g}")
        return h / 2

    def initial_step(self, y: np.ndarray, dy: np.ndarray) -> float:
        d0, d1 = np.linalg.norm(y), np.linalg.norm(dy)
        h = 0.01 * d0 / d1 if d1 > 1e-300 and d0 > 1e-300 else 1e-4
        return float(min(self.h_max, max(h, 1e3 * self.h_min)))
