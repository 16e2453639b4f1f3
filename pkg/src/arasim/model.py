"""Annealing specification, bases and Hamiltonian matrices.

Conventions
-----------
Full basis
    Computational states of ``N`` qubits. Qubit 0 is the most significant
    bit of the integer index and a set bit means spin up (``sigma_z = +1``).
    The all-up state therefore has index ``2**N - 1`` and label ``"11...1"``.
Dicke basis
    Product of two collective spins: ``j1 = n_up / 2`` for the qubits that
    start up and ``j2 = n_down / 2`` for the rest. A state ``(w1, w2)`` has
    ``S1z = j1 - w1`` and ``S2z = j2 - w2``; the flat index is
    ``w1 * (2 * j2 + 1) + w2``.

All Hamiltonians are real symmetric; energies are in units of ``J = 1``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property

import numpy as np

from .errors import BasisMismatchError, DimensionError, DomainError

#: Largest qubit count for which dense full-basis matrices are built.
FULL_BASIS_MAX_QUBITS = 12


def as_fraction(value) -> Fraction:
    """Parse ``value`` (float, int, Fraction or ``"a/b"`` string) as a rational."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, str):
        return Fraction(value.strip())
    if isinstance(value, (int, np.integer)):
        return Fraction(int(value))
    return Fraction(float(value)).limit_denominator(10**6)


@dataclass(frozen=True)
class AnnealSpec:
    """Problem and schedule parameters for one anneal.

    ``schedule_exponent`` selects the protocol: 1 is reverse annealing from
    a classical state, 0 is standard annealing from the transverse-field
    ground state.
    """

    n_qubits: int
    p_power: int = 3
    up_fraction: Fraction = Fraction(1)
    gamma_over_j: float = 1.0
    schedule_exponent: float = 1.0
    anneal_time: float = 100.0

    def __post_init__(self):
        object.__setattr__(self, "up_fraction", as_fraction(self.up_fraction))
        if int(self.n_qubits) != self.n_qubits or self.n_qubits < 2:
            raise DomainError(f"n_qubits must be an integer >= 2, got {self.n_qubits}")
        if int(self.p_power) != self.p_power or self.p_power < 1:
            raise DomainError(f"p_power must be a positive integer, got {self.p_power}")
        if not 0 <= self.up_fraction <= 1:
            raise DomainError(f"up_fraction must lie in [0, 1], got {self.up_fraction}")
        if not self.gamma_over_j >= 0:
            raise DomainError(f"gamma_over_j must be >= 0, got {self.gamma_over_j}")
        if not self.schedule_exponent >= 0:
            raise DomainError(f"schedule_exponent must be >= 0, got {self.schedule_exponent}")
        if not self.anneal_time > 0:
            raise DomainError(f"anneal_time must be > 0, got {self.anneal_time}")
        object.__setattr__(self, "n_qubits", int(self.n_qubits))
        object.__setattr__(self, "p_power", int(self.p_power))

    @property
    def n_up(self) -> int:
        return math.floor(self.n_qubits * self.up_fraction)

    @property
    def n_down(self) -> int:
        return self.n_qubits - self.n_up

    @property
    def hamming_distance(self) -> int:
        """Distance of the initial classical state from the all-up target."""
        return self.n_down

    @property
    def initial_magnetization(self) -> float:
        return (self.n_up - self.n_down) / self.n_qubits

    @property
    def is_reverse(self) -> bool:
        return self.schedule_exponent > 0

    def replace(self, **changes) -> "AnnealSpec":
        from dataclasses import replace

        return replace(self, **changes)


class BasisKind(str, enum.Enum):
    FULL = "full"
    DICKE = "dicke"


@dataclass(frozen=True)
class BasisRep:
    kind: BasisKind
    n_qubits: int
    n_up: int

    @property
    def n_down(self) -> int:
        return self.n_qubits - self.n_up

    @property
    def dimension(self) -> int:
        if self.kind is BasisKind.FULL:
            return 2**self.n_qubits
        return (self.n_up + 1) * (self.n_down + 1)

    @cached_property
    def labels(self) -> tuple[str, ...]:
        return tuple(basis_label(self, i) for i in range(self.dimension))

    @property
    def target_index(self) -> int:
        """Index of the all-up state."""
        return self.dimension - 1 if self.kind is BasisKind.FULL else 0


def build_basis(spec: AnnealSpec, kind: BasisKind | str, *,
                max_full_qubits: int = FULL_BASIS_MAX_QUBITS) -> BasisRep:
    """Return the basis descriptor, enforcing the full-basis size cap."""
    kind = BasisKind(kind)
    if kind is BasisKind.FULL and spec.n_qubits > max_full_qubits:
        raise DimensionError(
            f"full basis with N={spec.n_qubits} exceeds the cap of {max_full_qubits} qubits")
    return BasisRep(kind, spec.n_qubits, spec.n_up)


def basis_label(basis: BasisRep, index: int) -> str:
    if not 0 <= index < basis.dimension:
        raise IndexError(index)
    if basis.kind is BasisKind.FULL:
        return format(index, f"0{basis.n_qubits}b")
    w1, w2 = divmod(index, basis.n_down + 1)
    return f"({w1},{w2})"


# ---------------------------------------------------------------- operators


def spin_matrices(two_j: int) -> tuple[np.ndarray, np.ndarray]:
    """``(Sz, Sx)`` for spin ``j = two_j / 2`` in the ordering ``m = j, j-1, ...``."""
    j = two_j / 2
    m = j - np.arange(two_j + 1)
    sz = np.diag(m)
    # <m+1|S+|m> sits at row w-1, column w
    up = np.sqrt(j * (j + 1) - m[1:] * (m[1:] + 1))
    sx = np.zeros((two_j + 1, two_j + 1))
    idx = np.arange(two_j)
    sx[idx, idx + 1] = up / 2
    sx[idx + 1, idx] = up / 2
    return sz, sx


def sector_operators(spec: AnnealSpec, two_j1: int, two_j2: int):
    """``(H0, H_init, V_TF)`` restricted to the spin sector ``(j1, j2)``.

    With ``two_j1 = n_up`` and ``two_j2 = n_down`` this is the Dicke basis.
    """
    sz1, sx1 = spin_matrices(two_j1)
    sz2, sx2 = spin_matrices(two_j2)
    e1, e2 = np.eye(two_j1 + 1), np.eye(two_j2 + 1)
    z1, z2 = np.kron(sz1, e2), np.kron(e1, sz2)
    n = spec.n_qubits
    mag = np.diag(z1 + z2) * (2.0 / n)
    h0 = np.diag(-n * mag**spec.p_power)
    h_init = -2.0 * (z1 - z2)
    v_tf = -2.0 * (np.kron(sx1, e2) + np.kron(e1, sx2))
    return h0, h_init, v_tf


def spin_values(n_qubits: int) -> np.ndarray:
    """``(2**n, n)`` array of ``sigma_z`` eigenvalues per basis state and qubit."""
    idx = np.arange(2**n_qubits)
    shifts = n_qubits - 1 - np.arange(n_qubits)
    return 2 * ((idx[:, None] >> shifts[None, :]) & 1) - 1


def problem_spectrum(n_qubits: int, p_power: int) -> tuple[np.ndarray, np.ndarray]:
    """Distinct energies of ``-N m^p`` by down-spin count, with binomial degeneracies."""
    k = np.arange(n_qubits + 1)
    m = (n_qubits - 2 * k) / n_qubits
    return -n_qubits * m**p_power, np.array([math.comb(n_qubits, int(j)) for j in k])


def _full_operators(spec: AnnealSpec):
    n = spec.n_qubits
    z = spin_values(n)
    eps = np.where(np.arange(n) < spec.n_up, 1.0, -1.0)
    h0 = np.diag(-n * (z.sum(axis=1) / n) ** spec.p_power)
    h_init = np.diag(-(z * eps).sum(axis=1).astype(float))
    dim = 2**n
    v_tf = np.zeros((dim, dim))
    rows = np.arange(dim)
    for q in range(n):
        v_tf[rows, rows ^ (1 << (n - 1 - q))] -= 1.0
    return h0, h_init, v_tf


@dataclass(frozen=True, eq=False)
class HamiltonianPath:
    """The three fixed matrices whose schedule-weighted sum is ``H(s)``."""

    h0: np.ndarray
    h_init: np.ndarray
    v_tf: np.ndarray
    spec: AnnealSpec
    basis: BasisRep | None = field(default=None)

    @property
    def dimension(self) -> int:
        return self.h0.shape[0]

    def coefficients(self, s: float) -> tuple[float, float, float]:
        q = self.spec.schedule_exponent
        lam = s**q
        return s, (1 - s) * (1 - lam), self.spec.gamma_over_j * (1 - s) * lam

    def coefficient_derivatives(self, s: float) -> tuple[float, float, float]:
        q = self.spec.schedule_exponent
        lam = s**q
        dlam = 0.0 if q == 0 else q * s ** (q - 1)
        return 1.0, -(1 - lam) - (1 - s) * dlam, self.spec.gamma_over_j * (-lam + (1 - s) * dlam)

    def combine(self, coeffs) -> np.ndarray:
        a, b, c = coeffs
        return a * self.h0 + b * self.h_init + c * self.v_tf

    def at(self, s: float) -> np.ndarray:
        if not 0.0 <= s <= 1.0:
            raise DomainError(f"s must lie in [0, 1], got {s}")
        return self.combine(self.coefficients(s))

    def derivative(self, s: float) -> np.ndarray:
        """Analytic ``dH/ds``."""
        if not 0.0 <= s <= 1.0:
            raise DomainError(f"s must lie in [0, 1], got {s}")
        return self.combine(self.coefficient_derivatives(s))


def build_operators(spec: AnnealSpec, basis: BasisRep) -> HamiltonianPath:
    if basis.n_qubits != spec.n_qubits or basis.n_up != spec.n_up:
        raise BasisMismatchError("basis was built for a different specification")
    if basis.kind is BasisKind.FULL:
        mats = _full_operators(spec)
    else:
        mats = sector_operators(spec, spec.n_up, spec.n_down)
    return HamiltonianPath(*mats, spec=spec, basis=basis)


def hamiltonian_at(path: HamiltonianPath, s: float) -> np.ndarray:
    """Dense ``H(s)``; raises :class:`DomainError` outside ``[0, 1]``."""
    return path.at(s)


def initial_state(spec: AnnealSpec, basis: BasisRep) -> np.ndarray:
    """Normalized starting vector.

    Reverse annealing starts in the classical state with the first
    ``n_up`` qubits up. Standard annealing starts in the ground state of the
    transverse field, every qubit along ``+x``.
    """
    if basis.n_qubits != spec.n_qubits or basis.n_up != spec.n_up:
        raise BasisMismatchError("basis was built for a different specification")
    psi = np.zeros(basis.dimension, dtype=complex)
    if spec.is_reverse:
        if basis.kind is BasisKind.FULL:
            n = spec.n_qubits
            psi[sum(1 << (n - 1 - q) for q in range(spec.n_up))] = 1.0
        else:
            psi[spec.n_down] = 1.0
        return psi
    if basis.kind is BasisKind.FULL:
        psi[:] = 2.0 ** (-spec.n_qubits / 2)
        return psi
    a1 = _coherent_x(spec.n_up)
    a2 = _coherent_x(spec.n_down)
    return np.kron(a1, a2).astype(complex)


def _coherent_x(two_j: int) -> np.ndarray:
    """Spin-``j`` state with ``Sx = +j`` in the ``m = j, j-1, ...`` ordering."""
    w = np.arange(two_j + 1)
    logc = np.array([math.lgamma(two_j + 1) - math.lgamma(k + 1) - math.lgamma(two_j - k + 1)
                     for k in w])
    return np.exp(0.5 * logc - 0.5 * two_j * math.log(2))
