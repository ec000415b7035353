"""Two-time correlations by the quantum regression theorem, h(tau) and S(theta, nu).

The Liouvillian is diagonalized once per scenario and every propagation reuses
that eigenbasis, unless it fails its check against expm.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt
import scipy.linalg
from scipy.integrate import trapezoid

from .exceptions import CorrelatorError, PropagationError, TransformError
from .hilbert import HilbertSpace, SystemParams, system_operators, vec
from .steady_state import DensityOperator, SteadyMoments

logger = logging.getLogger(__name__)

TAIL_FRACTION = 0.1
TAIL_RTOL = 1e-4
MAX_TAU_POINTS = 200_000
# Upper bound on len(nu) * len(tau) evaluated at once by the cosine transform
TRANSFORM_CHUNK = 2_000_000
# Relative error of the eigen route against expm above which exact steps are used
VERIFY_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class CorrelationSeries:
    """h_theta(tau) on a grid symmetric about tau = 0."""

    tau: npt.NDArray[np.float64]
    h: npt.NDArray[np.float64]
    source: str
    lam: float
    n_inc: float
    stderr: npt.NDArray[np.float64] | None = None

    @classmethod
    def mirrored(cls, tau_pos, h_pos, stderr_pos=None, **meta) -> CorrelationSeries:
        tau_pos = np.asarray(tau_pos, dtype=float)
        if tau_pos[0] != 0.0:
            raise TransformError("positive tau grid must start at 0")
        h_pos = np.asarray(h_pos, dtype=float)
        tau = np.concatenate([-tau_pos[:0:-1], tau_pos])
        h = np.concatenate([h_pos[:0:-1], h_pos])
        stderr = None
        if stderr_pos is not None:
            stderr_pos = np.asarray(stderr_pos, dtype=float)
            stderr = np.concatenate([stderr_pos[:0:-1], stderr_pos])
        return cls(tau=tau, h=h, stderr=stderr, **meta)

    @property
    def dtau(self) -> float:
        return float(self.tau[1] - self.tau[0])

    @property
    def center(self) -> int:
        return len(self.tau) // 2

    def positive_half(self):
        c = self.center
        stderr = None if self.stderr is None else self.stderr[c:]
        return self.tau[c:], self.h[c:], stderr

    def negative_half(self):
        # Returned in order of increasing |tau|
        c = self.center
        stderr = None if self.stderr is None else self.stderr[c::-1]
        return -self.tau[c::-1], self.h[c::-1], stderr


@dataclass(frozen=True, eq=False)
class SpectrumSeries:
    nu: npt.NDArray[np.float64]
    S: npt.NDArray[np.float64]
    F: float


class QRTPropagator:
    """exp(L tau) acting on Liouville vectors.

    The default route is one eigendecomposition. When its eigenvectors are too
    ill conditioned to reproduce ``expm`` at a test step, the propagator
    switches to exact steps ``expm(L dtau)`` applied along the tau grid.
    """

    def __init__(self, L, method: str = "auto"):
        if method not in ("auto", "eigen", "expm"):
            raise ValueError(f"unknown propagation method {method!r}")
        L = np.asarray(L.toarray() if hasattr(L, "toarray") else L, dtype=complex)
        self.L = L
        self.eigenvalues, self.right = scipy.linalg.eig(L)
        # Inverse of the right eigenvectors rather than scipy's left vectors,
        # which are not guaranteed to be biorthogonal in degenerate subspaces
        self.inverse = scipy.linalg.inv(self.right)
        self.method = "expm" if method == "expm" else "eigen"
        if method == "auto":
            self.verification_error = self._verify()
            if self.verification_error > VERIFY_TOL:
                logger.warning(
                    "eigenbasis error %.3e against expm (cond %.2e); using exact steps",
                    self.verification_error,
                    np.linalg.cond(self.right),
                )
                self.method = "expm"

    def _verify(self) -> float:
        scale = float(np.max(np.abs(self.eigenvalues)))
        step = 10.0 / scale if scale > 0 else 1.0
        dim = math.isqrt(self.L.shape[0])
        trial = vec(np.eye(dim) / dim) + 0.1 * np.linspace(0, 1, self.L.shape[0])
        exact = scipy.linalg.expm(self.L * step) @ trial
        ours = self._eigen_vectors(trial, np.array([step]))[0]
        return float(np.max(np.abs(exact - ours))) / max(1.0, float(np.max(np.abs(exact))))

    def coefficients(self, v0) -> npt.NDArray[np.complex128]:
        return self.inverse @ np.asarray(v0)

    def _eigen_vectors(self, v0, tau) -> npt.NDArray[np.complex128]:
        weights = np.exp(np.outer(tau, self.eigenvalues)) * self.coefficients(v0)
        return weights @ self.right.T

    def _exact_steps(self, v0, tau):
        """Yield exp(L tau_k) v0 for an ascending grid, one exact step at a time."""
        if np.any(np.diff(tau) < 0):
            raise PropagationError("exact-step propagation needs an ascending tau grid")
        v = np.asarray(v0, dtype=complex)
        if tau[0] != 0.0:
            v = scipy.linalg.expm(self.L * tau[0]) @ v
        steps = np.diff(tau)
        uniform = len(steps) == 0 or np.allclose(steps, steps[0], rtol=1e-9, atol=0.0)
        step_matrix = scipy.linalg.expm(self.L * steps[0]) if len(steps) and uniform else None
        yield v
        for step in steps:
            v = (step_matrix if uniform else scipy.linalg.expm(self.L * step)) @ v
            yield v

    def propagate(self, v0, tau) -> npt.NDArray[np.complex128]:
        """Liouville vectors exp(L tau) v0, one row per tau."""
        tau = np.asarray(tau, dtype=float)
        if self.method == "expm":
            return np.array(list(self._exact_steps(v0, tau)))
        return self._eigen_vectors(v0, tau)

    def expect_series(self, op, v0, tau) -> npt.NDArray[np.complex128]:
        """Tr[op exp(L tau) v0] without forming the propagated matrices."""
        tau = np.asarray(tau, dtype=float)
        # Tr(A rho) = vec(A^T) . vec(rho)
        trace_row = vec(np.asarray(op).T)
        if self.method == "expm":
            return np.array([trace_row @ v for v in self._exact_steps(v0, tau)])
        weights = (trace_row @ self.right) * self.coefficients(v0)
        out = np.empty(len(tau), dtype=complex)
        rows = max(1, TRANSFORM_CHUNK // len(self.eigenvalues))
        for start in range(0, len(tau), rows):
            out[start : start + rows] = np.exp(np.outer(tau[start : start + rows], self.eigenvalues)) @ weights
        return out

    def slowest_rate(self) -> float:
        magnitude = np.abs(self.eigenvalues)
        nonzero = magnitude > 1e-8 * float(np.max(magnitude))
        return float(np.min(np.abs(self.eigenvalues[nonzero].real)))


def _as_propagator(L) -> QRTPropagator:
    return L if isinstance(L, QRTPropagator) else QRTPropagator(L)


def default_tau_grid(params: SystemParams, slowest_rate: float | None = None) -> npt.NDArray[np.float64]:
    """Uniform tau >= 0 grid resolving the Rabi oscillation over 12 decay times."""
    dtau = 1.0 / (20.0 * max(params.g, params.kappa, params.gamma))
    rates = params.angular
    tau_max = 12.0 / (0.5 * (rates.kappa + 0.5 * rates.gamma))
    if slowest_rate:
        tau_max = max(tau_max, 12.0 / slowest_rate)
    n = min(int(math.ceil(tau_max / dtau)), MAX_TAU_POINTS)
    return np.arange(n + 1) * dtau


def default_nu_grid(nu_max: float = 80.0, n: int = 801) -> npt.NDArray[np.float64]:
    return np.linspace(0.0, nu_max, n)


def two_time_corr(
    rho: DensityOperator, L, theta: float, tau_grid, space: HilbertSpace
) -> npt.NDArray[np.float64]:
    """Normally and time ordered <:dQ_theta(0) dQ_theta(tau):> for tau >= 0."""
    propagator = _as_propagator(L)
    ops = system_operators(space)
    lam = rho.expect(ops.a)
    da = ops.a - lam * ops.identity
    G1 = propagator.expect_series(da, vec(da @ rho.matrix), tau_grid)
    G2 = propagator.expect_series(da, vec(rho.matrix @ da.conj().T), tau_grid)
    C_N = 0.25 * (
        np.exp(-2j * theta) * G1 + np.exp(2j * theta) * G1.conj() + G2 + G2.conj()
    )
    return C_N.real


def h_from_qrt(C_N, moments: SteadyMoments, tau_grid) -> CorrelationSeries:
    lam = abs(moments.lam)
    if lam == 0:
        raise CorrelatorError("h(tau) is undefined for a dark field (lambda = 0)")
    h_pos = 1.0 + 2.0 * np.asarray(C_N) / (lam**2 + moments.n_inc)
    return CorrelationSeries.mirrored(
        tau_grid, h_pos, source="qrt", lam=float(moments.lam.real), n_inc=moments.n_inc
    )


def conditioned_regression(
    rho: DensityOperator, L, jump, theta: float, tau_grid, space: HilbertSpace
) -> npt.NDArray[np.float64]:
    """<A_theta>(tau) / <A_theta>_ss after the collapse rho -> J rho J^dag / Tr."""
    propagator = _as_propagator(L)
    ops = system_operators(space)
    quadrature = ops.quadrature(theta)
    level = rho.expect(quadrature).real
    if level == 0:
        raise CorrelatorError("steady-state quadrature is zero; regression is undefined")
    collapsed = jump @ rho.matrix @ jump.conj().T
    weight = np.trace(collapsed).real
    if weight <= 0:
        raise CorrelatorError("collapse channel has zero probability in the steady state")
    series = propagator.expect_series(quadrature, vec(collapsed / weight), tau_grid)
    return series.real / level


def h_exact(
    rho: DensityOperator, L, theta: float, tau_grid, space: HilbertSpace, moments: SteadyMoments
) -> CorrelationSeries:
    """Full third-order h_theta(tau) = <:(a^dag a)(0) A_theta(tau):> / (<A_theta> <a^dag a>)."""
    h_pos = conditioned_regression(rho, L, system_operators(space).a, theta, tau_grid, space)
    return CorrelationSeries.mirrored(
        tau_grid, h_pos, source="qrt-exact", lam=float(moments.lam.real), n_inc=moments.n_inc
    )


def _check_tail(series: CorrelationSeries) -> None:
    _, h_pos, stderr_pos = series.positive_half()
    excess = h_pos - 1.0
    n_tail = max(2, int(round(TAIL_FRACTION * len(excess))))
    tail = excess[-n_tail:]
    if series.source == "trajectory":
        if stderr_pos is None:
            return
        bound = 4.0 * float(np.max(stderr_pos[-n_tail:]))
        if abs(float(np.mean(tail))) > bound:
            raise TransformError(f"trajectory h tail mean {np.mean(tail):.3e} exceeds {bound:.3e}")
        return
    peak = float(np.max(np.abs(excess)))
    worst = float(np.max(np.abs(tail)))
    if worst > TAIL_RTOL * peak:
        raise TransformError(
            f"h has not decayed: tail |h-1| = {worst:.3e} vs peak {peak:.3e}; extend tau_max"
        )


def spectrum(series: CorrelationSeries, F: float, nu_grid, check_tail: bool = True) -> SpectrumSeries:
    """S(theta, nu) = 4F int_0^inf cos(2 pi nu tau) [h(tau) - 1] dtau (trapezoidal)."""
    if check_tail:
        _check_tail(series)
    tau, h_pos, _ = series.positive_half()
    excess = h_pos - 1.0
    nu = np.asarray(nu_grid, dtype=float)
    S = np.empty_like(nu)
    rows = max(1, TRANSFORM_CHUNK // len(tau))
    for start in range(0, len(nu), rows):
        block = nu[start : start + rows]
        kernel = np.cos(2.0 * np.pi * np.outer(block, tau))
        S[start : start + rows] = trapezoid(kernel * excess, tau, axis=1)
    return SpectrumSeries(nu=nu, S=4.0 * F * S, F=F)


def fwhm_zero_peak(spec: SpectrumSeries) -> float:
    """Full width (MHz) at half of S(0) above the spectrum minimum."""
    S, nu = spec.S, spec.nu
    if len(S) < 3 or nu[0] != 0.0:
        raise TransformError("the nu grid must start at 0 and hold at least three points")
    if not (S[0] > 0 and S[0] > S[1]):
        raise TransformError("no zero-frequency peak in the spectrum")
    baseline = float(np.min(S))
    half = baseline + 0.5 * (S[0] - baseline)
    below = np.nonzero(S < half)[0]
    if len(below) == 0:
        raise TransformError("spectrum never falls to half height on this nu grid")
    k = int(below[0])
    nu_half = nu[k - 1] + (half - S[k - 1]) * (nu[k] - nu[k - 1]) / (S[k] - S[k - 1])
    return float(2.0 * nu_half)


def dominant_frequency(series: CorrelationSeries, floor: float = 1e-4) -> float:
    """Oscillation frequency (MHz) of h - 1 for tau > 0 from its zero-crossing spacing."""
    tau, h_pos, _ = series.positive_half()
    y = h_pos - 1.0
    significant = np.nonzero(np.abs(y) > floor * float(np.max(np.abs(y))))[0]
    if len(significant) == 0:
        raise TransformError("h - 1 vanishes; there is no oscillation to measure")
    y, tau = y[: significant[-1] + 1], tau[: significant[-1] + 1]
    k = np.nonzero(y[:-1] * y[1:] < 0)[0]
    if len(k) < 2:
        raise TransformError("fewer than two zero crossings of h - 1")
    crossings = tau[k] - y[k] * (tau[k + 1] - tau[k]) / (y[k + 1] - y[k])
    spacing = (crossings[-1] - crossings[0]) / (len(crossings) - 1)
    return float(1.0 / (2.0 * spacing))
