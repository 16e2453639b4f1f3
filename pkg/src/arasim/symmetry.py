"""Exact reduction of permutation-symmetric full-basis dynamics.

The qubits split into an "up" block (the first ``n_up`` qubits) and a
"down" block. Both the Hamiltonian and the dephasing couplings commute
with permutations inside each block, so a symmetric density matrix has the
form ``rho = sum_sigma r_sigma (x) 1_{mult_sigma}`` over spin sectors
``sigma = (j1, j2)``. Only the small blocks ``r_sigma`` need to be
propagated.

The engine works with ``rhat_sigma = mult_sigma * r_sigma`` so the ordinary
trace is preserved. In these coordinates single-qubit dephasing
``X -> sum_i Z_i X Z_i`` becomes a completely positive map between sectors
with Kraus operators built from numerically computed coupling coefficients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
import scipy.linalg as sla

from .bath import CouplingKind
from .errors import SolverError
from .model import AnnealSpec, sector_operators, spin_values

_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class BlockBasis:
    """Total-spin basis of ``n`` qubits.

    ``vectors[two_j]`` has shape ``(2**n, 2j + 1, mult)``: computational
    amplitudes of ``|j, m = j - w, copy>``.
    """

    n: int
    two_js: tuple[int, ...]
    mults: dict[int, int]
    vectors: dict[int, np.ndarray]


def _raising(n: int) -> np.ndarray:
    dim = 2**n
    sp = np.zeros((dim, dim))
    cols = np.arange(dim)
    for q in range(n):
        bit = 1 << (n - 1 - q)
        down = (cols & bit) == 0
        sp[cols[down] | bit, cols[down]] = 1.0
    return sp


@lru_cache(maxsize=None)
def block_basis(n: int) -> BlockBasis:
    if n == 0:
        return BlockBasis(0, (0,), {0: 1}, {0: np.ones((1, 1, 1))})
    dim = 2**n
    ups = spin_values(n).clip(0).sum(axis=1) if n else np.zeros(1, int)
    sp = _raising(n)
    sm = sp.T
    two_js = tuple(range(n, -1, -2))
    mults, vectors = {}, {}
    for tj in two_js:
        k = (n + tj) // 2
        cols = np.flatnonzero(ups == k)
        rows = np.flatnonzero(ups == k + 1)
        block = sp[np.ix_(rows, cols)]
        hw = sla.null_space(block) if len(rows) else np.eye(len(cols))
        mult = hw.shape[1]
        pivot = np.argmax(np.abs(hw), axis=0)
        hw = hw * np.sign(hw[pivot, np.arange(mult)])
        vec = np.zeros((dim, tj + 1, mult))
        vec[cols, 0, :] = hw
        j = tj / 2
        for w in range(tj):
            m = j - w
            vec[:, w + 1, :] = sm @ vec[:, w, :] / math.sqrt(j * (j + 1) - m * (m - 1))
        mults[tj] = mult
        vectors[tj] = vec
    total = sum((tj + 1) * mults[tj] for tj in two_js)
    if total != dim:
        raise SolverError(f"spin decomposition of {n} qubits has {total} states, expected {dim}")
    return BlockBasis(n, two_js, mults, vectors)


@lru_cache(maxsize=None)
def dephasing_coefficients(n: int) -> dict[tuple[int, int], tuple[np.ndarray, np.ndarray]]:
    """Sector-to-sector coefficients of ``X -> sum_i Z_i X Z_i`` on ``n`` qubits.

    Returns ``{(two_j, two_j'): (two_ms, C)}`` where
    ``K(|j m><j m'| (x) 1) = C[m, m'] |j' m><j' m'| (x) 1 + (other sectors)``
    for the magnetizations ``two_ms`` shared by both sectors. Each ``C`` is a
    Gram matrix, hence positive semidefinite.
    """
    bb = block_basis(n)
    if n == 0:
        return {}
    z = spin_values(n).astype(float)
    ups = z.clip(0).sum(axis=1)
    out = {}
    for tj in bb.two_js:
        for tj2 in bb.two_js:
            if abs(tj - tj2) > 2:
                continue
            tmax = min(tj, tj2)
            two_ms = np.arange(tmax, -tmax - 1, -2)
            feats = []
            for tm in two_ms:
                rows = np.flatnonzero(ups == (n + tm) // 2)
                src = bb.vectors[tj][rows, (tj - tm) // 2, :]
                dst = bb.vectors[tj2][rows, (tj2 - tm) // 2, :]
                # p[i] = <j' m nu| Z_i |j m mu>
                p = np.einsum("xn,xi,xm->inm", dst, z[rows], src)
                feats.append(p)
            feats = np.array(feats)
            mult2 = bb.mults[tj2]
            gram = np.einsum("ainm,binm->ab", feats, feats) / mult2
            # the map must act as the identity on the multiplicity index
            for a in range(len(two_ms)):
                for b in range(len(two_ms)):
                    full = np.einsum("inm,ikm->nk", feats[a], feats[b])
                    if np.max(np.abs(full - gram[a, b] * np.eye(mult2))) > 1e-9:
                        raise SolverError("dephasing map is not multiplicity-diagonal")
            if np.max(np.abs(gram)) > _TOL:
                out[(tj, tj2)] = (two_ms, gram)
    return out


@dataclass(frozen=True)
class Sector:
    two_j1: int
    two_j2: int
    mult: int
    offset: int
    dim: int

    @property
    def slice(self) -> slice:
        return slice(self.offset, self.offset + self.dim)

    @property
    def d2(self) -> int:
        return self.two_j2 + 1


KrausBlock = tuple[slice, slice, np.ndarray]


class SectorReduction:
    """Block-diagonal representation of the symmetric subspace dynamics."""

    def __init__(self, spec: AnnealSpec):
        self.spec = spec
        self.block1 = block_basis(spec.n_up)
        self.block2 = block_basis(spec.n_down)
        sectors, off = [], 0
        for tj1 in self.block1.two_js:
            for tj2 in self.block2.two_js:
                dim = (tj1 + 1) * (tj2 + 1)
                mult = self.block1.mults[tj1] * self.block2.mults[tj2]
                sectors.append(Sector(tj1, tj2, mult, off, dim))
                off += dim
        self.sectors: tuple[Sector, ...] = tuple(sectors)
        self.dimension = off
        self._index = {(s.two_j1, s.two_j2): s for s in sectors}

    @property
    def dicke(self) -> Sector:
        return self.sectors[0]

    @cached_property
    def weights(self) -> np.ndarray:
        w = np.empty(self.dimension)
        for sec in self.sectors:
            w[sec.slice] = sec.mult
        return w

    def sector_hamiltonians(self):
        """Per-sector ``(H0, H_init, V_TF)`` triples."""
        return [sector_operators(self.spec, s.two_j1, s.two_j2) for s in self.sectors]

    def operators(self):
        """Block-diagonal ``(H0, H_init, V_TF)`` on the reduced space."""
        mats = [np.zeros((self.dimension, self.dimension)) for _ in range(3)]
        for sec, trio in zip(self.sectors, self.sector_hamiltonians()):
            for big, small in zip(mats, trio):
                big[sec.slice, sec.slice] = small
        return tuple(mats)

    # ------------------------------------------------------------ couplings

    def kraus(self, kind: CouplingKind) -> list[tuple[KrausBlock, ...]]:
        kind = CouplingKind(kind)
        if kind is CouplingKind.COLLECTIVE:
            blocks = []
            for sec in self.sectors:
                n1, n2 = sec.two_j1 + 1, sec.two_j2 + 1
                m1 = sec.two_j1 / 2 - np.arange(n1)
                m2 = sec.two_j2 / 2 - np.arange(n2)
                a = 2 * (m1[:, None] + m2[None, :]).ravel()
                blocks.append((sec.slice, sec.slice, np.diag(a)))
            return [tuple(blocks)]
        ops = []
        for which in (1, 2):
            coeffs = dephasing_coefficients(self.spec.n_up if which == 1 else self.spec.n_down)
            mults = (self.block1 if which == 1 else self.block2).mults
            for (tj, tj_new), (two_ms, c) in coeffs.items():
                chat = c * (mults[tj_new] / mults[tj])
                lam, u = np.linalg.eigh(chat)
                if lam.min() < -_TOL * max(1.0, lam.max()):
                    raise SolverError("dephasing coefficients are not positive semidefinite")
                keep = lam > _TOL * max(1.0, lam.max())
                for other in (self.block2 if which == 1 else self.block1).two_js:
                    if which == 1:
                        src, dst = self._index[(tj, other)], self._index[(tj_new, other)]
                    else:
                        src, dst = self._index[(other, tj)], self._index[(other, tj_new)]
                    for val, vec in zip(lam[keep], u[:, keep].T):
                        ops.append(((dst.slice, src.slice,
                                     self._shift_block(which, src, dst, two_ms, np.sqrt(val) * vec)),))
        return ops

    @staticmethod
    def _shift_block(which: int, src: Sector, dst: Sector, two_ms, amp) -> np.ndarray:
        mat = np.zeros((dst.dim, src.dim))
        for tm, a in zip(two_ms, amp):
            if which == 1:
                w, w_new = (src.two_j1 - tm) // 2, (dst.two_j1 - tm) // 2
                for w2 in range(src.d2):
                    mat[w_new * dst.d2 + w2, w * src.d2 + w2] = a
            else:
                w, w_new = (src.two_j2 - tm) // 2, (dst.two_j2 - tm) // 2
                for w1 in range(src.two_j1 + 1):
                    mat[w1 * dst.d2 + w_new, w1 * src.d2 + w] = a
        return mat

    # ----------------------------------------------------- full-basis maps

    def isometry(self, sector: Sector) -> np.ndarray:
        """``(2**N, mult, dim)`` full-basis amplitudes of each copy of ``sector``."""
        v1 = self.block1.vectors[sector.two_j1]
        v2 = self.block2.vectors[sector.two_j2]
        t = np.einsum("awm,bvn->abmnwv", v1, v2)
        return t.reshape(2**self.spec.n_qubits, sector.mult, sector.dim)

    def dicke_embedding(self) -> np.ndarray:
        """Columns are the Dicke basis states written in the full basis."""
        return self.isometry(self.dicke)[:, 0, :]

    def reduce_state(self, rho_full: np.ndarray, *, atol: float = 1e-10) -> np.ndarray:
        """Reduced ``rhat``; raises ``ValueError`` if ``rho_full`` is not block symmetric."""
        out = np.zeros((self.dimension, self.dimension), dtype=complex)
        for sec in self.sectors:
            t = self.isometry(sec)
            out[sec.slice, sec.slice] = np.einsum("xma,xy,ymb->ab", t, rho_full, t)
        if np.max(np.abs(self.lift_state(out) - rho_full)) > atol:
            raise ValueError("state is not symmetric under permutations within each block")
        return out

    def lift_state(self, rhat: np.ndarray) -> np.ndarray:
        dim = 2**self.spec.n_qubits
        out = np.zeros((dim, dim), dtype=complex)
        for sec in self.sectors:
            t = self.isometry(sec)
            r = rhat[sec.slice, sec.slice] / sec.mult
            out += np.einsum("xma,ab,ymb->xy", t, r, t)
        return out
