"""Truncated Hilbert space, system operators, Hamiltonian and Liouvillian.

Basis ordering is photon-number major with the atoms minor, atom 1 fastest:
the state |n; s_N ... s_1> sits at index ``n * 2**N + sum_j s_j * 2**(j - 1)``
where ``s_j = 1`` means atom j is excited. Every matrix in the package is built
on this ordering, so results are reproducible bit for bit.

Rates are configured as ordinary frequencies (value / 2pi) in MHz and converted
to angular units (rad/us) exactly once, in :attr:`SystemParams.angular`.
Times are in microseconds and hbar = 1.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, replace
from functools import cached_property, lru_cache
from typing import NamedTuple

import numpy as np
import numpy.typing as npt
from scipy import sparse

from .exceptions import ParameterError

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi

OperatorMatrix = npt.NDArray[np.complex128]
Superoperator = npt.NDArray[np.complex128]


class AngularRates(NamedTuple):
    g: float
    kappa: float
    gamma: float
    epsilon: float
    Gamma_bw: float


@dataclass(frozen=True)
class SystemParams:
    """Physical inputs of one cavity QED configuration.

    ``g``, ``kappa``, ``gamma``, ``epsilon`` and ``Gamma_bw`` are ordinary
    frequencies in MHz (value/2pi). ``r`` is the fraction of
    the output sent to the photon counter, ``theta`` the local oscillator phase
    and ``eta`` the homodyne coupling efficiency.
    """

    g: float
    kappa: float
    gamma: float
    epsilon: float = 0.0
    N: int = 1
    n_max: int = 3
    r: float = 0.5
    theta: float = 0.0
    Gamma_bw: float = 100.0
    eta: float = 1.0

    def __post_init__(self):
        for name in ("g", "kappa", "gamma", "Gamma_bw"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} must be positive, got {getattr(self, name)}")
        if not self.epsilon >= 0:
            raise ParameterError(f"epsilon must be non-negative, got {self.epsilon}")
        if self.N not in (1, 2):
            raise ParameterError(f"N must be 1 or 2, got {self.N}")
        if not isinstance(self.n_max, (int, np.integer)) or self.n_max < 1:
            raise ParameterError(f"n_max must be an integer >= 1, got {self.n_max}")
        if not 0.0 <= self.r <= 1.0:
            raise ParameterError(f"r must lie in [0, 1], got {self.r}")
        if not 0.0 < self.eta <= 1.0:
            raise ParameterError(f"eta must lie in (0, 1], got {self.eta}")

    @cached_property
    def angular(self) -> AngularRates:
        # The single conversion point from MHz to rad/us
        return AngularRates(
            g=TWO_PI * self.g,
            kappa=TWO_PI * self.kappa,
            gamma=TWO_PI * self.gamma,
            epsilon=TWO_PI * self.epsilon,
            Gamma_bw=TWO_PI * self.Gamma_bw,
        )

    def replace(self, **changes) -> SystemParams:
        return replace(self, **changes)

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class HilbertSpace:
    n_max: int
    N: int

    @property
    def atom_dim(self) -> int:
        return 2**self.N

    @property
    def field_dim(self) -> int:
        return self.n_max + 1

    @property
    def dim(self) -> int:
        return self.field_dim * self.atom_dim

    def index(self, n: int, excited: tuple[int, ...] = ()) -> int:
        """Basis index of |n> with the listed atoms (1-based) excited."""
        if not 0 <= n <= self.n_max:
            raise ParameterError(f"photon number {n} outside 0..{self.n_max}")
        atoms = 0
        for j in excited:
            if not 1 <= j <= self.N:
                raise ParameterError(f"atom index {j} outside 1..{self.N}")
            atoms |= 1 << (j - 1)
        return n * self.atom_dim + atoms

    def basis_state(self, n: int, excited: tuple[int, ...] = ()) -> npt.NDArray[np.complex128]:
        psi = np.zeros(self.dim, dtype=complex)
        psi[self.index(n, excited)] = 1.0
        return psi


class AtomicOperators(NamedTuple):
    lower: OperatorMatrix
    raising: OperatorMatrix
    inversion: OperatorMatrix


@dataclass(frozen=True)
class SystemOperators:
    """Read-only operator bundle shared by every module for one space."""

    space: HilbertSpace
    identity: OperatorMatrix
    a: OperatorMatrix
    adag: OperatorMatrix
    number: OperatorMatrix
    lower: tuple[OperatorMatrix, ...]
    raising: tuple[OperatorMatrix, ...]
    inversion: tuple[OperatorMatrix, ...]
    excited: tuple[OperatorMatrix, ...]
    S_minus: OperatorMatrix
    S_plus: OperatorMatrix

    def quadrature(self, theta: float) -> OperatorMatrix:
        # A_theta = (a e^{-i theta} + a^dag e^{i theta}) / 2
        return 0.5 * (np.exp(-1j * theta) * self.a + np.exp(1j * theta) * self.adag)


def build_space(params: SystemParams) -> HilbertSpace:
    if params.N not in (1, 2):
        raise ParameterError(f"N must be 1 or 2, got {params.N}")
    if params.n_max < 1:
        raise ParameterError(f"n_max must be >= 1, got {params.n_max}")
    return HilbertSpace(n_max=int(params.n_max), N=int(params.N))


def _frozen(matrix) -> OperatorMatrix:
    matrix = np.ascontiguousarray(matrix, dtype=complex)
    matrix.setflags(write=False)
    return matrix


def annihilation(space: HilbertSpace) -> OperatorMatrix:
    field = np.diag(np.sqrt(np.arange(1, space.n_max + 1, dtype=float)), k=1)
    return _frozen(np.kron(field, np.eye(space.atom_dim)))


def atomic_ops(space: HilbertSpace, j: int) -> AtomicOperators:
    if not 1 <= j <= space.N:
        raise ParameterError(f"atom index {j} outside 1..{space.N}")
    # Single-atom basis: index 0 ground, index 1 excited
    sigma_minus = np.array([[0.0, 1.0], [0.0, 0.0]])
    sigma_z = np.diag([-1.0, 1.0])

    def embed(single):
        atoms = np.kron(np.eye(2 ** (space.N - j)), np.kron(single, np.eye(2 ** (j - 1))))
        return _frozen(np.kron(np.eye(space.field_dim), atoms))

    return AtomicOperators(
        lower=embed(sigma_minus),
        raising=embed(sigma_minus.T),
        inversion=embed(sigma_z),
    )


def collective_ops(space: HilbertSpace) -> tuple[OperatorMatrix, OperatorMatrix]:
    atoms = [atomic_ops(space, j) for j in range(1, space.N + 1)]
    S_minus = sum(op.lower for op in atoms)
    S_plus = sum(op.raising for op in atoms)
    return _frozen(S_minus), _frozen(S_plus)


@lru_cache(maxsize=32)
def system_operators(space: HilbertSpace) -> SystemOperators:
    a = annihilation(space)
    adag = _frozen(a.conj().T)
    atoms = [atomic_ops(space, j) for j in range(1, space.N + 1)]
    S_minus, S_plus = collective_ops(space)
    return SystemOperators(
        space=space,
        identity=_frozen(np.eye(space.dim)),
        a=a,
        adag=adag,
        number=_frozen(adag @ a),
        lower=tuple(op.lower for op in atoms),
        raising=tuple(op.raising for op in atoms),
        inversion=tuple(op.inversion for op in atoms),
        excited=tuple(_frozen(op.raising @ op.lower) for op in atoms),
        S_minus=S_minus,
        S_plus=S_plus,
    )


def hamiltonian(params: SystemParams, space: HilbertSpace) -> OperatorMatrix:
    """Resonant interaction-picture Hamiltonian (hbar = 1, rad/us).

    H = -i g (S+ a - a^dag S-) + i epsilon (a^dag - a)
    """
    ops = system_operators(space)
    rates = params.angular
    H = -1j * rates.g * (ops.S_plus @ ops.a - ops.adag @ ops.S_minus)
    H = H + 1j * rates.epsilon * (ops.adag - ops.a)
    return H


def collapse_operators(params: SystemParams, space: HilbertSpace) -> list[OperatorMatrix]:
    ops = system_operators(space)
    rates = params.angular
    cavity = math.sqrt(2.0 * rates.kappa) * ops.a
    atoms = [math.sqrt(rates.gamma) * lower for lower in ops.lower]
    return [cavity, *atoms]


# Column stacking: vec(A X B) = (B^T kron A) vec(X)
def vec(rho) -> npt.NDArray[np.complex128]:
    return np.asarray(rho).reshape(-1, order="F")


def unvec(v, dim: int | None = None) -> npt.NDArray[np.complex128]:
    v = np.asarray(v)
    if dim is None:
        dim = math.isqrt(v.shape[-1])
    return v.reshape(v.shape[:-1] + (dim, dim), order="F")


def _spre(op):
    return sparse.kron(sparse.identity(op.shape[0], format="csr"), sparse.csr_matrix(op), format="csr")


def _spost(op):
    return sparse.kron(sparse.csr_matrix(op).T, sparse.identity(op.shape[0], format="csr"), format="csr")


def dissipator(c: OperatorMatrix, as_sparse: bool = False):
    """D[c] rho = c rho c^dag - (c^dag c rho + rho c^dag c) / 2 as a superoperator."""
    cdc = c.conj().T @ c
    D = sparse.kron(sparse.csr_matrix(c.conj()), sparse.csr_matrix(c), format="csr")
    D = D - 0.5 * _spre(cdc) - 0.5 * _spost(cdc)
    return D.tocsr() if as_sparse else D.toarray()


def liouvillian(params: SystemParams, space: HilbertSpace, as_sparse: bool = False):
    """Lindblad generator acting on column-stacked density matrices."""
    H = hamiltonian(params, space)
    L = -1j * (_spre(H) - _spost(H))
    for c in collapse_operators(params, space):
        L = L + dissipator(c, as_sparse=True)
    L = L.tocsr()
    logger.debug("liouvillian built dim=%d sparse=%s nnz=%d", space.dim, as_sparse, L.nnz)
    return L if as_sparse else L.toarray()


@dataclass(frozen=True)
class DerivedParams:
    C1: float
    n0: float
    C: float
    C1prime: float
    y: float
    Y: float
    x: float | None = None
    X: float | None = None

    def as_dict(self) -> dict:
        return asdict(self)


def derived_params(
    params: SystemParams, lam: complex | None = None, n_bar: float | None = None
) -> DerivedParams:
    # Ratios are unit free, so the MHz values are used directly
    C1 = params.g**2 / (params.kappa * params.gamma)
    n0 = params.gamma**2 / (8.0 * params.g**2)
    y = params.epsilon / (params.kappa * math.sqrt(n0))
    return DerivedParams(
        C1=C1,
        n0=n0,
        C=params.N * C1,
        C1prime=C1 / (1.0 + params.gamma / (2.0 * params.kappa)),
        y=y,
        Y=y**2,
        x=None if lam is None else float(np.real(lam)) / math.sqrt(n0),
        X=None if n_bar is None else n_bar / n0,
    )
