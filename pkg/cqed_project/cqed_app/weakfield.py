"""Closed-form weak-field results used as an independent oracle.

Nothing here feeds the numerical pipeline; the numbers are only compared with
the steady-state, QRT and trajectory routes.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from enum import Enum

import numpy as np
import numpy.typing as npt

from .exceptions import WeakFieldError
from .hilbert import HilbertSpace, SystemParams, build_space, derived_params


class CollapseKind(str, Enum):
    CAVITY = "cavity"
    SPONTANEOUS = "spontaneous"


@dataclass(frozen=True)
class WeakFieldConstants:
    # phi = phi_over_lambda * lambda
    phi_over_lambda: float
    alpha: float
    beta: float
    zeta_cav: float
    zeta_spont: float
    # Omega and the rates below are angular (rad/us)
    Omega: float
    Phi_cav: float
    Phi_spont: float
    q: float
    kappa: float
    gamma: float

    @property
    def Omega_mhz(self) -> float:
        return self.Omega / (2.0 * math.pi)

    @property
    def envelope_rate(self) -> float:
        return 0.5 * (self.kappa + 0.5 * self.gamma)

    def phi(self, lam: float) -> float:
        return self.phi_over_lambda * lam

    def zeta(self, kind: CollapseKind) -> float:
        return self.zeta_cav if CollapseKind(kind) is CollapseKind.CAVITY else self.zeta_spont

    def Phi(self, kind: CollapseKind) -> float:
        return self.Phi_cav if CollapseKind(kind) is CollapseKind.CAVITY else self.Phi_spont

    def as_dict(self) -> dict:
        values = asdict(self)
        values["Omega_MHz"] = self.Omega_mhz
        values["alpha_beta"] = self.alpha * self.beta
        return values


def constants(params: SystemParams) -> WeakFieldConstants:
    rates = params.angular
    g, kappa, gamma, N = rates.g, rates.kappa, rates.gamma, params.N
    derived = derived_params(params)
    C, C1prime = derived.C, derived.C1prime

    radicand = N * g**2 - 0.25 * (kappa - 0.5 * gamma) ** 2
    if radicand <= 0:
        raise WeakFieldError(
            "overdamped regime: N g^2 <= (kappa - gamma/2)^2 / 4, vacuum Rabi frequency is imaginary"
        )
    Omega = math.sqrt(radicand)

    denominator = 1.0 + 2.0 * C - 2.0 * C1prime
    alpha = 1.0 - 2.0 * C1prime
    beta = (1.0 + 2.0 * C) / denominator
    q = math.sqrt(1.0 - 1.0 / N)
    Phi_spont = (2.0 * kappa - gamma) / (4.0 * Omega) + 2.0 * N * g**2 * (
        q * beta / math.sqrt(2.0) - 1.0
    ) / (gamma * Omega * (beta - 1.0))

    return WeakFieldConstants(
        phi_over_lambda=-2.0 * math.sqrt(N) * g / gamma,
        alpha=alpha,
        beta=beta,
        zeta_cav=-4.0 * C1prime * C / denominator,
        zeta_spont=2.0 * C1prime / denominator,
        Omega=Omega,
        Phi_cav=-(2.0 * kappa + gamma) / (4.0 * Omega),
        Phi_spont=Phi_spont,
        q=q,
        kappa=kappa,
        gamma=gamma,
    )


@dataclass(frozen=True, eq=False)
class RegressionWaveform:
    kind: CollapseKind
    tau: npt.NDArray[np.float64]
    values: npt.NDArray[np.float64]


def regression_shape(consts: WeakFieldConstants, kind: CollapseKind, tau) -> npt.NDArray[np.float64]:
    tau = np.asarray(tau, dtype=float)
    envelope = np.exp(-consts.envelope_rate * tau)
    return envelope * (np.cos(consts.Omega * tau) - consts.Phi(kind) * np.sin(consts.Omega * tau))


def waveform(consts: WeakFieldConstants, kind: CollapseKind, tau_grid) -> RegressionWaveform:
    """<A_0>(tau) / lambda = 1 + zeta f(tau) after a collapse of the given kind."""
    kind = CollapseKind(kind)
    tau = np.asarray(tau_grid, dtype=float)
    values = 1.0 + consts.zeta(kind) * regression_shape(consts, kind, tau)
    return RegressionWaveform(kind=kind, tau=tau, values=values)


def step_ratios(consts: WeakFieldConstants) -> dict[str, float]:
    return {
        CollapseKind.CAVITY.value: consts.alpha * consts.beta,
        CollapseKind.SPONTANEOUS.value: consts.beta,
    }


def equilibrium_state(
    params: SystemParams, lam: float, space: HilbertSpace | None = None
) -> npt.NDArray[np.complex128]:
    """Second-order weak-field pure state, truncated exactly at the displayed terms.

    |E> is the symmetric one-excitation atomic state.
    """
    space = space or build_space(params)
    if space.n_max < 2:
        raise WeakFieldError("the weak-field state needs n_max >= 2")
    consts = constants(params)
    phi = consts.phi(lam)
    ab = consts.alpha * consts.beta

    psi = np.zeros(space.dim, dtype=complex)
    psi[space.index(0)] = 1.0
    psi[space.index(1)] = lam
    psi[space.index(2)] = lam**2 / math.sqrt(2.0) * ab
    weight = 1.0 / math.sqrt(space.N)
    for j in range(1, space.N + 1):
        psi[space.index(0, (j,))] += weight * phi
        psi[space.index(1, (j,))] += weight * lam * phi * consts.beta
    return psi / np.linalg.norm(psi)


def emission_ratio(params: SystemParams) -> float:
    """Spontaneous to cavity emission probability ratio from the equilibrium state."""
    return 2.0 * params.N * derived_params(params).C1
