"""Shared machinery for the frame-by-frame integrators.

A ``Representation`` is the space the integrators actually work in: either
the basis of a :class:`~arasim.model.HamiltonianPath` or the symmetry-reduced
sector space. It provides instantaneous eigenframes (computed sector by
sector) and coupling operators written as Kraus blocks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import SolverError
from .model import HamiltonianPath
from .spectrum import degenerate_levels

# (rows, cols, matrix); a 1-D matrix is a diagonal
KrausBlock = tuple[slice, slice, np.ndarray]


def _as_block(op: np.ndarray) -> KrausBlock:
    full = slice(None)
    if not np.any(op - np.diag(np.diag(op))):
        return (full, full, np.diag(op).copy())
    return (full, full, op)


@dataclass(eq=False)
class Frame:
    s: float
    energies: np.ndarray
    vectors: np.ndarray
    weights: np.ndarray
    levels: np.ndarray = field(init=False)
    ground: np.ndarray = field(init=False)

    def __post_init__(self):
        self.levels = degenerate_levels(self.energies)
        self.ground = np.flatnonzero(self.levels == 0)


class Representation:
    """Hamiltonian pieces, couplings and weights on the working space."""

    def __init__(self, path: HamiltonianPath, sectors: list[slice], kraus: list[tuple[KrausBlock, ...]],
                 weights: np.ndarray | None = None, *, frozen_s: float | None = None, reduction=None):
        self.path = path
        self.h0, self.h_init, self.v_tf = path.h0, path.h_init, path.v_tf
        self.dimension = self.h0.shape[0]
        self.sectors = sectors
        self.kraus = kraus
        self.weights = np.ones(self.dimension) if weights is None else np.asarray(weights, float)
        self.frozen_s = frozen_s
        self.reduction = reduction
        self._blocks = [(sl, self.h0[sl, sl], self.h_init[sl, sl], self.v_tf[sl, sl]) for sl in sectors]

    @classmethod
    def plain(cls, path: HamiltonianPath, operators=(), **kw) -> "Representation":
        sectors = [slice(0, path.dimension)]
        return cls(path, sectors, [(_as_block(np.asarray(op)),) for op in operators], **kw)

    def coefficients(self, s: float):
        return self.path.coefficients(self.frozen_s if self.frozen_s is not None else s)

    def hamiltonian(self, s: float) -> np.ndarray:
        return self.path.combine(self.coefficients(s))

    def frame(self, s: float) -> Frame:
        a, b, c = self.coefficients(s)
        dim = self.dimension
        energies = np.empty(dim)
        vectors = np.zeros((dim, dim))
        for sl, h0, hi, vt in self._blocks:
            try:
                e, v = np.linalg.eigh(a * h0 + b * hi + c * vt)
            except np.linalg.LinAlgError as exc:
                raise SolverError(f"eigensolver failed at s={s}") from exc
            energies[sl] = e
            vectors[sl, sl] = v
        order = np.argsort(energies, kind="stable")
        return Frame(float(s), energies[order], vectors[:, order], self.weights[order])

    def pieces_in_frame(self, frame: Frame):
        """``V^T H0 V``, ``V^T H_init V`` and ``V^T V_TF V``."""
        v = frame.vectors
        return tuple(v.T @ (m @ v) for m in (self.h0, self.h_init, self.v_tf))

    def kraus_in_frame(self, frame: Frame) -> list[np.ndarray]:
        v = frame.vectors
        out = []
        for op in self.kraus:
            acc = np.zeros((self.dimension, self.dimension))
            for rows, cols, m in op:
                if m.ndim == 1:
                    acc += v[rows].T @ (m[:, None] * v[cols])
                else:
                    acc += v[rows].T @ (m @ v[cols])
            out.append(acc)
        return out


def ground_overlap(old: Frame, new: Frame) -> float:
    """Overlap of consecutive ground spaces; 1 means unchanged."""
    ov = new.vectors[:, new.ground].T @ old.vectors[:, old.ground]
    return float(np.sqrt(np.sum(ov**2) / max(len(old.ground), len(new.ground))))


def real_matmul(a: np.ndarray, z: np.ndarray) -> np.ndarray:
    """``a @ z`` for real ``a`` and complex ``z`` without upcasting ``a``."""
    return (a @ z.real) + 1j * (a @ z.imag)


def output_grid(s_grid) -> np.ndarray:
    s = np.asarray(s_grid, dtype=float)
    if s.ndim != 1 or len(s) < 1 or np.any(np.diff(s) <= 0) or s[0] < 0 or s[-1] > 1:
        raise ValueError("s_grid must be strictly increasing within [0, 1]")
    return s
