"""Steady state of the master equation, field moments and truncation sweeps."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
import numpy.typing as npt
import scipy.linalg
from scipy import sparse
from scipy.optimize import brentq
from scipy.sparse.linalg import spsolve

from .exceptions import CalibrationError, ConvergenceError, SteadyStateError
from .hilbert import (
    HilbertSpace,
    SystemParams,
    build_space,
    derived_params,
    liouvillian,
    system_operators,
    unvec,
    vec,
)

logger = logging.getLogger(__name__)

# Largest dim^2 handled with a dense SVD; beyond it the sparse LU route is used
DENSE_LIMIT = 4096
NULL_RTOL = 1e-10
RESIDUAL_TOL = 1e-10
POSITIVITY_TOL = 1e-8
TRACE_TOL = 1e-10
IMAG_LAMBDA_TOL = 1e-8

N_MAX_FLOOR = 2
N_MAX_CAP = 40


@dataclass(frozen=True, eq=False)
class DensityOperator:
    matrix: npt.NDArray[np.complex128]

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def trace(self) -> complex:
        return complex(np.trace(self.matrix))

    @property
    def hermiticity_defect(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T)))

    @cached_property
    def eigenvalues(self) -> npt.NDArray[np.float64]:
        return scipy.linalg.eigvalsh(self.matrix)

    @property
    def min_eigenvalue(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def purity(self) -> float:
        return float(np.real(np.trace(self.matrix @ self.matrix)))

    def expect(self, op) -> complex:
        return complex(np.trace(op @ self.matrix))

    def dominant_state(self) -> npt.NDArray[np.complex128]:
        """Eigenvector of largest weight, phased so its largest entry is real."""
        _, vectors = scipy.linalg.eigh(self.matrix)
        psi = vectors[:, -1]
        pivot = psi[np.argmax(np.abs(psi))]
        psi = psi * (abs(pivot) / pivot)
        return psi / np.linalg.norm(psi)

    def validate(self) -> None:
        if abs(self.trace - 1.0) > TRACE_TOL:
            raise SteadyStateError(f"trace {self.trace} differs from 1")
        if self.hermiticity_defect > TRACE_TOL:
            raise SteadyStateError(f"hermiticity defect {self.hermiticity_defect:.3e}")
        if self.min_eigenvalue < -POSITIVITY_TOL:
            raise SteadyStateError(
                f"min eigenvalue {self.min_eigenvalue:.3e} below -{POSITIVITY_TOL}; "
                "truncation leakage, raise n_max"
            )


def _dense_null_vector(L) -> npt.NDArray[np.complex128]:
    _, s, vh = scipy.linalg.svd(L)
    nullity = int(np.sum(s <= NULL_RTOL * s[0]))
    if nullity != 1:
        raise SteadyStateError(f"Liouvillian null space has dimension {nullity}, expected 1")
    return vh[-1].conj()


def _sparse_null_vector(L) -> npt.NDArray[np.complex128]:
    # Replace the first equation by the trace condition Tr(rho) = 1
    n = L.shape[0]
    dim = math.isqrt(n)
    trace_row = sparse.csr_matrix(
        (np.ones(dim), (np.zeros(dim, dtype=int), np.arange(dim) * (dim + 1))), shape=(1, n)
    )
    A = sparse.vstack([trace_row, L.tocsr()[1:]]).tocsc()
    b = np.zeros(n, dtype=complex)
    b[0] = 1.0
    return spsolve(A, b)


def steady_state(L) -> DensityOperator:
    """Solve L rho = 0 for the unique trace-one steady state."""
    dim = math.isqrt(L.shape[0])
    if sparse.issparse(L):
        v = _sparse_null_vector(L)
    else:
        v = _dense_null_vector(L)
    rho = unvec(v, dim)
    trace = np.trace(rho)
    if abs(trace) == 0:
        raise SteadyStateError("null vector has zero trace")
    rho = rho / trace
    rho = 0.5 * (rho + rho.conj().T)

    residual = float(np.max(np.abs(L @ vec(rho))))
    if residual > RESIDUAL_TOL:
        raise SteadyStateError(f"steady-state residual {residual:.3e} exceeds {RESIDUAL_TOL}")

    density = DensityOperator(rho)
    density.validate()
    return density


@dataclass(frozen=True)
class SteadyMoments:
    lam: complex
    n_bar: float
    n_inc: float
    X: float
    F: float

    def as_dict(self) -> dict:
        return {
            "lambda_re": self.lam.real,
            "lambda_im": self.lam.imag,
            "n_bar": self.n_bar,
            "n_inc": self.n_inc,
            "X": self.X,
            "F": self.F,
        }


def moments(rho: DensityOperator, params: SystemParams) -> SteadyMoments:
    ops = system_operators(build_space(params))
    lam = rho.expect(ops.a)
    if abs(lam.imag) > IMAG_LAMBDA_TOL:
        raise SteadyStateError(f"Im <a> = {lam.imag:.3e} is not negligible on resonance")
    n_bar = float(np.real(rho.expect(ops.number)))
    n_inc = n_bar - abs(lam) ** 2
    if n_inc < -POSITIVITY_TOL:
        raise SteadyStateError(f"incoherent photon number {n_inc:.3e} is negative")
    return SteadyMoments(
        lam=lam,
        n_bar=n_bar,
        n_inc=n_inc,
        X=n_bar / derived_params(params).n0,
        F=2.0 * params.angular.kappa * n_bar,
    )


@dataclass(frozen=True, eq=False)
class SteadySolution:
    params: SystemParams
    space: HilbertSpace
    L: np.ndarray = field(repr=False)
    rho: DensityOperator = field(repr=False)
    moments: SteadyMoments


def solve(params: SystemParams, method: str = "auto") -> SteadySolution:
    """Build the Liouvillian for ``params`` and return its steady state.

    ``method`` is ``"dense"`` (SVD with a null-space check), ``"sparse"``
    (LU with the trace row) or ``"auto"`` which picks dense up to DENSE_LIMIT.
    """
    space = build_space(params)
    if method == "auto":
        method = "dense" if space.dim**2 <= DENSE_LIMIT else "sparse"
    L = liouvillian(params, space, as_sparse=(method == "sparse"))
    rho = steady_state(L)
    return SteadySolution(params=params, space=space, L=L, rho=rho, moments=moments(rho, params))


def mean_photon_number(params: SystemParams) -> float:
    return solve(params, method="sparse").moments.n_bar


def converge_nmax(
    params: SystemParams,
    observable: Callable[[SystemParams], float] = mean_photon_number,
    rel_tol: float = 5e-4,
    n_min: int = N_MAX_FLOOR,
    cap: int = N_MAX_CAP,
) -> int:
    """Smallest n_max whose observable moves by less than ``rel_tol`` at n_max + 2."""
    n = n_min
    previous = observable(params.replace(n_max=n))
    while n + 2 <= cap:
        current = observable(params.replace(n_max=n + 2))
        change = abs(current - previous)
        logger.debug("n_max sweep n=%d value=%.6e change=%.3e", n + 2, current, change)
        if change <= rel_tol * abs(current) + 1e-15:
            logger.info("n_max converged n_max=%d value=%.6e", n, previous)
            return n
        previous = current
        n += 2
    raise ConvergenceError(f"observable not converged below n_max={cap}; drive too strong")


def calibrate_drive(params: SystemParams, target_X: float) -> float:
    """Drive amplitude epsilon (MHz) giving the requested intracavity X."""
    if target_X <= 0:
        raise CalibrationError(f"target X must be positive, got {target_X}")

    def excess(epsilon: float) -> float:
        return solve(params.replace(epsilon=epsilon), method="sparse").moments.X - target_X

    upper = 20.0 * params.kappa
    if excess(upper) < 0:
        raise CalibrationError(
            f"X={target_X} not reached at epsilon=20 kappa with n_max={params.n_max}"
        )
    epsilon = brentq(excess, 0.0, upper, xtol=1e-14, rtol=1e-12, maxiter=200)
    logger.info("drive calibrated target_X=%.4e epsilon=%.6e MHz", target_X, epsilon)
    return float(epsilon)
