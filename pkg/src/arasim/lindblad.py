"""Adiabatic master equation with a Davies generator.

The generator is built in the instantaneous eigenframe of ``H(s)``. Jump
operators connect energy levels rather than individual eigenvectors:
``L = P_m A P_n`` with rate ``gamma(E_n - E_m)`` for every pair of distinct
levels, plus one zero-frequency operator ``sum_m P_m A P_m`` per coupling.
For a nondegenerate spectrum this is the usual ``|a><a|A|b><b|`` form.
Grouping by level keeps the generator independent of how a degenerate
eigenbasis happens to be chosen.

Time integration uses the frame at the start of each step. The state is
advanced in the interaction picture of the frame energies with an
embedded Runge-Kutta 5(4) pair, so the fast phase rotation is exact and
the step size follows the slow drift of the Hamiltonian and the dissipator.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _engine
from ._engine import Frame, Representation, ground_overlap, real_matmul
from ._rk import StepControl, dopri5_step
from .bath import BathSpec, CouplingKind, LambShiftTable, gamma
from .errors import BasisMismatchError, DomainError
from .model import BasisKind, BasisRep, HamiltonianPath, initial_state
from .spectrum import EigFrame, degenerate_levels
from .symmetry import SectorReduction

log = logging.getLogger(__name__)

PRUNE_TOL = 1e-12
POSITIVITY_WARN = -1e-5


# ------------------------------------------------------------------ states


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    matrix: np.ndarray
    basis: BasisRep | None = None

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    @property
    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T)))

    @property
    def min_eigenvalue(self) -> float:
        h = (self.matrix + self.matrix.conj().T) / 2
        return float(np.linalg.eigvalsh(h)[0])

    @property
    def purity(self) -> float:
        return float(np.sum(np.abs(self.matrix) ** 2))

    @property
    def populations(self) -> np.ndarray:
        return np.diag(self.matrix).real.copy()

    def trace_distance(self, other: "DensityMatrix | np.ndarray") -> float:
        m = other.matrix if isinstance(other, DensityMatrix) else np.asarray(other)
        d = self.matrix - m
        return float(0.5 * np.sum(np.abs(np.linalg.eigvalsh((d + d.conj().T) / 2))))

    @classmethod
    def pure(cls, psi: np.ndarray, basis: BasisRep | None = None) -> "DensityMatrix":
        psi = np.asarray(psi, dtype=complex)
        return cls(np.outer(psi, psi.conj()) / np.vdot(psi, psi).real, basis)


def gibbs_state(h: np.ndarray, beta: float, basis: BasisRep | None = None) -> DensityMatrix:
    """``exp(-beta H) / Z``; energies are shifted by the minimum before exponentiating."""
    e, v = np.linalg.eigh(h)
    w = np.exp(-beta * (e - e[0]))
    return DensityMatrix((v * (w / w.sum())) @ v.conj().T, basis)


def log_partition_function(h: np.ndarray, beta: float) -> float:
    e = np.linalg.eigvalsh(h)
    return float(-beta * e[0] + np.log(np.sum(np.exp(-beta * (e - e[0])))))


def partition_function(h: np.ndarray, beta: float) -> float:
    return float(np.exp(log_partition_function(h, beta)))


def gibbs_projected(h0: np.ndarray, projector: np.ndarray, beta: float,
                    basis: BasisRep | None = None) -> tuple[DensityMatrix, float]:
    """Gibbs state of ``H0`` restricted to the range of ``projector``.

    Returns the state (zero outside the subspace) and the restricted
    partition function ``Z'``.
    """
    p = (projector + projector.conj().T) / 2
    if np.max(np.abs(p @ p - p)) > 1e-8:
        raise DomainError("projector is not idempotent")
    pe, pv = np.linalg.eigh(p)
    q = pv[:, pe > 0.5]
    hr = q.conj().T @ h0 @ q
    sub = gibbs_state(hr, beta)
    return DensityMatrix(q @ sub.matrix @ q.conj().T, basis), partition_function(hr, beta)


# --------------------------------------------------------------- couplings


@dataclass(frozen=True, eq=False)
class CouplingSet:
    kind: CouplingKind
    operators: tuple[np.ndarray, ...]
    basis: BasisRep | None = None


def build_couplings(basis: BasisRep, kind: CouplingKind | str) -> CouplingSet:
    """``sum_i sigma_z^i`` (collective) or the ``N`` single-qubit ``sigma_z^i`` (independent)."""
    kind = CouplingKind(kind)
    if basis.kind is BasisKind.DICKE:
        if kind is CouplingKind.INDEPENDENT:
            raise BasisMismatchError("independent dephasing breaks permutation symmetry; "
                                     "use the full basis")
        d2 = basis.n_down + 1
        w1, w2 = np.divmod(np.arange(basis.dimension), d2)
        a = 2.0 * ((basis.n_up / 2 - w1) + (basis.n_down / 2 - w2))
        return CouplingSet(kind, (np.diag(a),), basis)
    from .model import spin_values

    z = spin_values(basis.n_qubits).astype(float)
    if kind is CouplingKind.COLLECTIVE:
        return CouplingSet(kind, (np.diag(z.sum(axis=1)),), basis)
    return CouplingSet(kind, tuple(np.diag(z[:, q]) for q in range(basis.n_qubits)), basis)


# ------------------------------------------------------------ generator


@dataclass(frozen=True)
class LindbladEntry:
    coupling: int
    target_level: int
    source_level: int
    omega: float
    rate: float
    operator: np.ndarray


class LindbladSet:
    """Davies generator frozen at one eigenframe.

    All matrices are stored in eigen coordinates (columns of ``vectors``).
    ``rates[i, j]`` is the rate for ``j -> i``, i.e. ``gamma(E_j - E_i)``,
    and is zero inside a level.
    """

    def __init__(self, energies: np.ndarray, vectors: np.ndarray, couplings_eig: Sequence[np.ndarray],
                 bath: BathSpec, *, lamb_table: LambShiftTable | None = None, s: float | None = None):
        self.s = s
        self.energies = np.asarray(energies, dtype=float)
        self.vectors = vectors
        self.bath = bath
        self.couplings = list(couplings_eig)
        dim = len(self.energies)
        self.levels = degenerate_levels(self.energies)
        self.n_levels = int(self.levels.max()) + 1 if dim else 0
        self.nondegenerate = self.n_levels == dim
        self.same = self.levels[:, None] == self.levels[None, :]
        omega = self.energies[None, :] - self.energies[:, None]
        self.omega = omega
        self.gamma0 = gamma(bath, 0.0)
        rates = gamma(bath, omega)
        rates[self.same] = 0.0
        self.rates = rates
        if bath.lamb_shift and bath.eta > 0:
            table = lamb_table or LambShiftTable(bath)
            smat = table(omega)
            smat[self.same] = 0.0
            s0 = float(table(0.0))
        else:
            smat, s0 = np.zeros_like(omega), 0.0
        self._setup(smat, s0)

    def _setup(self, smat, s0):
        dim = len(self.energies)
        k = len(self.couplings)
        b = np.array(self.couplings) if k else np.zeros((0, dim, dim))
        g = b * np.sqrt(self.rates)
        l0 = b * self.same
        w = np.sum(np.abs(b) ** 2, axis=0) if k else np.zeros((dim, dim))
        w_same = w * self.same
        self.loss_diag = (self.rates * w).sum(axis=0) + self.gamma0 * w_same.sum(axis=0)
        self.lamb_diag = (smat * w).sum(axis=0) + s0 * w_same.sum(axis=0)
        dk = np.einsum("kii->ki", b)
        self._decay = (-0.5 * (self.loss_diag[:, None] + self.loss_diag[None, :])
                       + self.gamma0 * (dk.T @ dk.conj()))
        # indices that belong to degenerate levels need block corrections
        counts = np.bincount(self.levels)
        r = np.flatnonzero(counts[self.levels] > 1)
        self._r = r
        if len(r):
            off = self.same[np.ix_(r, r)] & ~np.eye(len(r), dtype=bool)
            gr, lr = g[:, :, r], l0[:, :, r]
            loss_b = np.einsum("kix,kiy->xy", gr.conj(), gr) + self.gamma0 * np.einsum(
                "kix,kiy->xy", lr.conj(), lr)
            lamb_b = np.einsum("kix,kiy->xy", b[:, :, r].conj(), (smat * b)[:, :, r]) + s0 * np.einsum(
                "kix,kiy->xy", lr.conj(), lr)
            self._loss_block = np.where(off, loss_b, 0.0)
            self._lamb_block = np.where(off, lamb_b, 0.0)
            self._rk = np.where(off[None], l0[:, r][:, :, r], 0.0)
            self._dk = dk
            self._rk_h = self._rk.conj().transpose(0, 2, 1)
            pa, pb = np.nonzero(off)
            rows = np.concatenate([np.arange(dim), r[pa]])
            cols = np.concatenate([np.arange(dim), r[pb]])
            gt = g[:, rows][:, :, rows]
            gc = g[:, cols][:, :, cols]
            self._transfer = np.einsum("kpq,kpq->pq", gt, gc.conj())
            self._bd = (rows, cols)
        else:
            self._loss_block = self._lamb_block = None
            self._transfer = self.rates * w
            self._bd = None
        if np.isrealobj(b):
            self._transfer = self._transfer.real
        self._real = np.isrealobj(b)

    # matrices in eigen coordinates
    def _assemble(self, diag, block) -> np.ndarray:
        out = np.diag(diag).astype(complex if block is not None and np.iscomplexobj(block) else float)
        if block is not None:
            out[np.ix_(self._r, self._r)] += block.real if self._real else block
        return out

    def loss_matrix(self) -> np.ndarray:
        return self._assemble(self.loss_diag, self._loss_block)

    def lamb_matrix(self) -> np.ndarray:
        return self._assemble(self.lamb_diag, self._lamb_block)

    def add_lamb_to(self, mat: np.ndarray) -> None:
        """Add ``H_LS`` (eigen coordinates) to ``mat`` in place."""
        mat[np.diag_indices_from(mat)] += self.lamb_diag
        if self._lamb_block is not None:
            mat[np.ix_(self._r, self._r)] += self._lamb_block.real if self._real else self._lamb_block

    def dissipator(self, rho: np.ndarray) -> np.ndarray:
        """``D[rho]`` for ``rho`` in eigen coordinates."""
        out = self._decay * rho
        if self._bd is None:
            idx = np.diag_indices_from(out)
            out[idx] += self._transfer @ np.diag(rho)
            return out
        r = self._r
        rows, cols = self._bd
        q = self._loss_block
        out[r, :] -= 0.5 * (q @ rho[r, :])
        out[:, r] -= 0.5 * (rho[:, r] @ q)
        rk, dk = self._rk, self._dk
        g0 = self.gamma0
        rc = rho[:, r]
        rr = rho[r, :]
        out[:, r] += g0 * np.einsum("ka,kax->ax", dk, rc @ self._rk_h)
        out[r, :] += g0 * np.einsum("kxb,kb->xb", rk @ rr, dk.conj())
        out[np.ix_(r, r)] += g0 * (rk @ rr[:, r] @ self._rk_h).sum(axis=0)
        out[rows, cols] += self._transfer @ rho[rows, cols]
        return out

    # --- trajectory helpers

    def effective_correction(self):
        """``H_LS - (i/2) Lambda`` as ``(diagonal, indices, block)``; ``block`` may be None."""
        diag = self.lamb_diag - 0.5j * self.loss_diag
        if self._loss_block is None:
            return diag, self._r, None
        block = self._lamb_block - 0.5j * self._loss_block
        if not np.any(block):
            return diag, self._r, None
        return diag, self._r, block

    def channel_weights(self, psi: np.ndarray):
        """Unnormalized probabilities of every jump for state ``psi`` (eigen coordinates).

        Returns ``(weights, labels)`` where ``labels[k] = (coupling, m, n)`` and
        ``m == n == -1`` marks the zero-frequency channel.
        """
        weights, labels = [], []
        if self.nondegenerate:
            for k, x in enumerate(self.couplings):
                amp2 = np.abs(x * psi[None, :]) ** 2
                w = self.rates * amp2
                weights.append(w.ravel())
                weights.append([self.gamma0 * float(np.sum(np.diag(amp2)))])
                labels.append(("pairs", k))
                labels.append(("zero", k))
        else:
            ind = np.zeros((len(self.energies), self.n_levels))
            ind[np.arange(len(self.energies)), self.levels] = 1.0
            lev_rates = self._level_rates()
            for k, x in enumerate(self.couplings):
                by_src = x @ (psi[:, None] * ind)
                amp2 = ind.T @ (np.abs(by_src) ** 2)
                w = lev_rates * amp2
                np.fill_diagonal(w, 0.0)
                weights.append(w.ravel())
                zero = (x * self.same) @ psi
                weights.append([self.gamma0 * float(np.vdot(zero, zero).real)])
                labels.append(("pairs", k))
                labels.append(("zero", k))
        return weights, labels

    def _level_rates(self) -> np.ndarray:
        first = np.array([np.flatnonzero(self.levels == m)[0] for m in range(self.n_levels)])
        e = self.energies[first]
        r = gamma(self.bath, e[None, :] - e[:, None])
        np.fill_diagonal(r, 0.0)
        return r

    def sample_jump(self, psi: np.ndarray, u: float) -> np.ndarray:
        """Apply the jump selected by the uniform number ``u``; returns the unnormalized state."""
        weights, labels = self.channel_weights(psi)
        sizes = [len(w) for w in weights]
        flat = np.concatenate([np.asarray(w, float) for w in weights])
        cum = np.cumsum(flat)
        if cum[-1] <= 0:
            raise DomainError("no jump channel has positive weight")
        pick = int(np.searchsorted(cum, u * cum[-1], side="right"))
        pick = min(pick, len(flat) - 1)
        for (kind, k), size in zip(labels, sizes):
            if pick < size:
                break
            pick -= size
        x = self.couplings[k]
        if kind == "zero":
            return (x * self.same) @ psi
        nl = self.n_levels if not self.nondegenerate else len(self.energies)
        m, n = divmod(pick, nl)
        rows = self.levels == m
        cols = self.levels == n
        out = np.zeros_like(psi)
        out[rows] = x[np.ix_(rows, cols)] @ psi[cols]
        return out

    def entries(self) -> list[LindbladEntry]:
        """Jump operators in the representation basis, pruning negligible ones."""
        out = []
        v = self.vectors
        for k, x in enumerate(self.couplings):
            for m in range(self.n_levels):
                rows = self.levels == m
                for n in range(self.n_levels):
                    cols = self.levels == n
                    blk = x[np.ix_(rows, cols)]
                    if np.max(np.abs(blk)) < PRUNE_TOL:
                        continue
                    op = np.zeros_like(x)
                    op[np.ix_(rows, cols)] = blk
                    i, j = np.flatnonzero(rows)[0], np.flatnonzero(cols)[0]
                    rate = self.gamma0 if m == n else float(self.rates[i, j])
                    out.append(LindbladEntry(k, m, n, float(self.omega[i, j]), rate, v @ op @ v.conj().T))
        return out


def build_lindblad_set(frame: EigFrame, couplings: CouplingSet, bath: BathSpec, *,
                       lamb_table: LambShiftTable | None = None) -> LindbladSet:
    v = frame.vectors
    ops = [v.conj().T @ a @ v for a in couplings.operators]
    return LindbladSet(frame.energies, v, ops, bath, lamb_table=lamb_table, s=frame.s)


def apply_dissipator(lset: LindbladSet, rho: np.ndarray) -> np.ndarray:
    """Dissipator acting on ``rho`` given in the representation basis."""
    v = lset.vectors
    return v @ lset.dissipator(v.conj().T @ rho @ v) @ v.conj().T


def lamb_shift_hamiltonian(lset: LindbladSet) -> np.ndarray:
    v = lset.vectors
    return v @ lset.lamb_matrix() @ v.conj().T


def davies_for_frame(rep: Representation, frame: Frame, bath: BathSpec,
                     table: LambShiftTable | None) -> LindbladSet | None:
    if bath.eta == 0 or not rep.kraus:
        return None
    return LindbladSet(frame.energies, frame.vectors, rep.kraus_in_frame(frame), bath,
                       lamb_table=table, s=frame.s)


# ------------------------------------------------------------- integration


def make_representation(path: HamiltonianPath, couplings: CouplingSet | None, rho0: np.ndarray, *,
                        reduce: bool | str = "auto", frozen_s: float | None = None):
    """Choose the working space; returns ``(representation, initial state in it)``.

    With ``reduce="auto"`` the sector reduction is used for full-basis runs
    with a standard coupling set and a block-symmetric initial state.
    """
    ops = couplings.operators if couplings is not None else ()
    can_reduce = (path.basis is not None and path.basis.kind is BasisKind.FULL
                  and couplings is not None and couplings.kind is not None)
    if reduce is True and not can_reduce:
        raise DomainError("sector reduction needs a full-basis path and a standard coupling set")
    if reduce in ("auto", True) and can_reduce:
        red = SectorReduction(path.spec)
        try:
            rhat = red.reduce_state(rho0)
        except ValueError:
            if reduce is True:
                raise
        else:
            rpath = HamiltonianPath(*red.operators(), spec=path.spec, basis=None)
            rep = Representation(rpath, [s.slice for s in red.sectors], red.kraus(couplings.kind),
                                 red.weights, frozen_s=frozen_s, reduction=red)
            return rep, rhat
    return Representation.plain(path, ops, frozen_s=frozen_s), np.asarray(rho0, dtype=complex)


@dataclass(eq=False)
class AmeResult:
    s: np.ndarray
    ground_population: np.ndarray
    trace: np.ndarray
    purity: np.ndarray
    min_eigenvalue: np.ndarray
    hermiticity: np.ndarray
    final_state: DensityMatrix
    n_steps: int
    n_rejected: int
    max_trace_drift: float
    max_hermiticity_drift: float
    reduced: bool
    states: list[DensityMatrix] | None = field(default=None, repr=False)

    @property
    def final_ground_population(self) -> float:
        return float(self.ground_population[-1])

    @property
    def final_populations(self) -> np.ndarray:
        return self.final_state.populations


def _change_frame(o: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """``o @ rho @ o.T`` for a real overlap matrix ``o``."""
    return real_matmul(o, real_matmul(o, rho.T).T)


def _observe(rho_e: np.ndarray, frame: Frame):
    w = frame.weights
    idx = frame.ground
    pg = float(np.sum(np.diag(rho_e)[idx].real))
    tr = float(np.trace(rho_e).real)
    herm = float(np.max(np.abs(rho_e - rho_e.conj().T)))
    x = rho_e / np.sqrt(np.outer(w, w))
    x = (x + x.conj().T) / 2
    mineig = float(np.linalg.eigvalsh(x)[0])
    purity = float(np.sum(np.abs(rho_e) ** 2 / w[:, None]))
    return pg, tr, purity, mineig, herm


def integrate_ame(path: HamiltonianPath, bath: BathSpec, couplings: CouplingSet | None = None,
                  rho0: np.ndarray | None = None, tau: float | None = None,
                  s_grid: Sequence[float] | None = None, *, rtol: float = 1e-8, atol: float = 1e-10,
                  reduce: bool | str = "auto", freeze_at: float | None = None,
                  store_states: bool = False, h_max: float = 0.05,
                  min_overlap: float = 0.999) -> AmeResult:
    """Integrate ``d rho/ds = tau * (-i[H + H_LS, rho] + D[rho])`` over ``s_grid``.

    ``freeze_at`` holds the Hamiltonian (and therefore the generator) fixed
    at that ``s`` for the whole run, which is how relaxation towards a
    fixed-point state is probed.
    """
    tau = path.spec.anneal_time if tau is None else float(tau)
    if not tau > 0:
        raise DomainError(f"tau must be > 0, got {tau}")
    grid = _engine.output_grid(np.linspace(0, 1, 101) if s_grid is None else s_grid)
    if couplings is None and bath.eta > 0:
        if path.basis is None:
            raise DomainError("couplings are required for a path without basis information")
        couplings = build_couplings(path.basis, bath.coupling)
    if rho0 is None:
        if path.basis is None:
            raise DomainError("rho0 is required for a path without basis information")
        rho0 = DensityMatrix.pure(initial_state(path.spec, path.basis)).matrix
    rho0 = rho0.matrix if isinstance(rho0, DensityMatrix) else np.asarray(rho0, dtype=complex)
    rep, state = make_representation(path, couplings if bath.eta > 0 else None, rho0,
                                     reduce=reduce, frozen_s=freeze_at)
    table = LambShiftTable(bath) if bath.lamb_shift and bath.eta > 0 else None
    ctrl = StepControl(rtol=rtol, atol=atol, h_max=h_max)

    s = float(grid[0])
    frame = rep.frame(s)
    rho_e = frame.vectors.T @ state @ frame.vectors
    records = [_observe(rho_e, frame)]
    states = [rho_e] if store_states else None
    stored_frames = [frame] if store_states else None
    n_steps = n_rej = 0
    drift_tr = drift_h = 0.0
    h = None
    cache = {}

    def prepared(fr: Frame):
        # Hamiltonian pieces and generator in the frame, built once per accepted frame
        key = id(fr)
        if key not in cache:
            cache.clear()
            pieces = rep.pieces_in_frame(fr) if freeze_at is None else None
            dav = davies_for_frame(rep, fr, bath, table)
            cache[key] = (pieces, dav)
        return cache[key]

    for target in grid[1:]:
        while s < target - 1e-15:
            pieces, dav = prepared(frame)
            e = frame.energies

            lamb = dav.lamb_matrix() if dav is not None and pieces is None else None

            def rhs(d, y, s0=s, pieces=pieces, dav=dav, e=e, lamb=lamb):
                ph = np.exp(1j * tau * e * d)
                rot = np.outer(ph.conj(), ph)
                if pieces is not None:
                    a, b, c = rep.coefficients(s0 + d)
                    delta = a * pieces[0] + b * pieces[1] + c * pieces[2]
                    delta[np.diag_indices_from(delta)] -= e
                    if dav is not None:
                        dav.add_lamb_to(delta)
                else:
                    delta = lamb
                out = np.zeros_like(y)
                if delta is not None:
                    x = real_matmul(delta, y * rot) if np.isrealobj(delta) else delta @ (y * rot)
                    out = (-1j * tau) * (x - x.conj().T) * rot.conj()
                if dav is not None:
                    out = out + tau * dav.dissipator(y)
                return out

            if h is None:
                h = ctrl.initial_step(rho_e, rhs(0.0, rho_e))
            step = min(h, target - s)
            y5, err = dopri5_step(rhs, rho_e, step)
            ratio = ctrl.error_ratio(rho_e, y5, err)
            if ratio > 1.0:
                h = ctrl.shrink(step, ratio, s)
                n_rej += 1
                continue
            s_new = target if step == target - s else s + step
            new_frame = rep.frame(s_new) if freeze_at is None else frame
            if new_frame is not frame and ground_overlap(frame, new_frame) < min_overlap:
                h = ctrl.halve(step, s)
                n_rej += 1
                continue
            ph = np.exp(-1j * tau * e * step)
            rho_t = y5 * np.outer(ph, ph.conj())
            if new_frame is not frame:
                rho_t = _change_frame(new_frame.vectors.T @ frame.vectors, rho_t)
            drift_h = max(drift_h, float(np.max(np.abs(rho_t - rho_t.conj().T))))
            tr = np.trace(rho_t).real
            drift_tr = max(drift_tr, abs(tr - np.trace(rho_e).real))
            rho_e = 0.5 * (rho_t + rho_t.conj().T) / tr
            frame = new_frame
            s = s_new
            n_steps += 1
            h = ctrl.next_step(step, ratio) if step >= h else max(h, ctrl.next_step(step, ratio))
        rec = _observe(rho_e, frame)
        if rec[3] < POSITIVITY_WARN:
            warnings.warn(f"density matrix eigenvalue {rec[3]:.2e} at s={s:.6f}", RuntimeWarning,
                          stacklevel=2)
        records.append(rec)
        if store_states:
            states.append(rho_e)
            stored_frames.append(frame)

    arr = np.array(records)
    final_rep = frame.vectors @ rho_e @ frame.vectors.T
    basis = path.basis
    if rep.reduction is not None:
        final_rep = rep.reduction.lift_state(final_rep)
    out_states = None
    if store_states:
        out_states = []
        for r, fr in zip(states, stored_frames):
            m = fr.vectors @ r @ fr.vectors.T
            if rep.reduction is not None:
                m = rep.reduction.lift_state(m)
            out_states.append(DensityMatrix(m, basis))
    log.debug("AME finished: %d steps, %d rejected", n_steps, n_rej)
    return AmeResult(grid, arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3], arr[:, 4],
                     DensityMatrix(final_rep, basis), n_steps, n_rej, drift_tr, drift_h,
                     rep.reduction is not None, out_states)
