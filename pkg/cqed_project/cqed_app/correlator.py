"""Wave-particle correlation from trajectory records.

Cavity clicks are the start events; the photocurrent is averaged on both
sides of each click and converted to h_theta(tau).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import numpy.typing as npt
from scipy.optimize import curve_fit

from .exceptions import CorrelatorError
from .hilbert import SystemParams
from .qrt import CorrelationSeries, SpectrumSeries, spectrum
from .trajectory import EventKind, TrajectoryRecord

logger = logging.getLogger(__name__)

# Signal-free band starts this many regression envelope times from tau = 0
BAND_ENVELOPES = 10.0
# The band must span at least this many detector correlation times
MIN_BAND_CORRELATIONS = 20.0


@dataclass(frozen=True, eq=False)
class StartClickSet:
    # Position of the record in the batch and click time within it
    record: npt.NDArray[np.int64]
    times: npt.NDArray[np.float64]

    @property
    def N_s(self) -> int:
        return len(self.times)

    def subsample(self, keep) -> StartClickSet:
        keep = np.asarray(keep, dtype=bool)
        return StartClickSet(record=self.record[keep], times=self.times[keep])


@dataclass(frozen=True, eq=False)
class AveragedCurrent:
    tau: npt.NDArray[np.float64]
    values: npt.NDArray[np.float64]
    stderr: npt.NDArray[np.float64]
    N_s: int


def _eligible(record: TrajectoryRecord, tau_max: float) -> list[float]:
    duration = record.duration
    return [
        event.time
        for event in record.events
        if event.kind is EventKind.CAVITY and tau_max <= event.time <= duration - tau_max
    ]


def collect_starts(record: TrajectoryRecord, tau_max: float) -> StartClickSet:
    times = _eligible(record, tau_max)
    if not times:
        raise CorrelatorError(f"no cavity clicks with {tau_max} us of context on both sides")
    return StartClickSet(record=np.zeros(len(times), dtype=np.int64), times=np.array(times))


def collect_batch_starts(records, tau_max: float, limit: int | None = None) -> StartClickSet:
    """Starts over a batch in ascending (record, time) order, optionally only the first ``limit``."""
    positions, times = [], []
    for position, record in enumerate(records):
        for t in _eligible(record, tau_max):
            positions.append(position)
            times.append(t)
    if limit is not None:
        positions, times = positions[:limit], times[:limit]
    if not times:
        raise CorrelatorError(f"no cavity clicks with {tau_max} us of context in {len(records)} records")
    return StartClickSet(record=np.array(positions, dtype=np.int64), times=np.array(times))


def trajectory_tau_grid(dt_s: float, tau_max: float) -> npt.NDArray[np.float64]:
    """Symmetric grid of sample offsets covering [-tau_max, tau_max]."""
    m = int(math.floor(tau_max / dt_s + 1e-9))
    return np.arange(-m, m + 1) * dt_s


def _window_average(records, starts: StartClickSet, tau_grid, trace: str):
    if starts.N_s == 0:
        raise CorrelatorError("cannot average over zero starts")
    tau = np.asarray(tau_grid, dtype=float)
    dt_s = records[0].dt_s
    offsets = np.rint(tau / dt_s).astype(np.int64)
    total = np.zeros(len(tau))
    squares = np.zeros(len(tau))
    # Ascending start order keeps the reduction reproducible
    for position, t in zip(starts.record, starts.times):
        samples = getattr(records[position], trace)
        center = int(round(t / dt_s))
        lo, hi = center + offsets[0], center + offsets[-1]
        if lo < 0 or hi >= len(samples):
            raise CorrelatorError(f"tau grid reaches outside record {position} around t={t:.4g}")
        segment = samples[center + offsets]
        total += segment
        squares += segment**2
    n = starts.N_s
    mean = total / n
    if n > 1:
        variance = np.clip(squares / n - mean**2, 0.0, None) * n / (n - 1)
        stderr = np.sqrt(variance / n)
    else:
        stderr = np.full(len(tau), np.nan)
    return tau, mean, stderr


def average_current(records, starts: StartClickSet, tau_grid) -> AveragedCurrent:
    """H(tau) = mean of i(t_j + tau) over the start clicks, nearest sample."""
    tau, mean, stderr = _window_average(records, starts, tau_grid, "current")
    return AveragedCurrent(tau=tau, values=mean, stderr=stderr, N_s=starts.N_s)


def average_conditioned_field(records, starts: StartClickSet, tau_grid, lam: float) -> AveragedCurrent:
    """<A_theta>_c / lambda averaged around the clicks (photocount records)."""
    if lam == 0:
        raise CorrelatorError("lambda must be non-zero to normalize the conditioned field")
    tau, mean, stderr = _window_average(records, starts, tau_grid, "cond_field")
    return AveragedCurrent(tau=tau, values=mean / lam, stderr=stderr / abs(lam), N_s=starts.N_s)


def h_from_current(H: AveragedCurrent, lam: float, params: SystemParams, n_inc: float = 0.0) -> CorrelationSeries:
    """h(tau) = H(tau) / (lambda sqrt(8 kappa (1 - r))), valid for a wide detector bandwidth."""
    if not lam > 0:
        raise CorrelatorError(f"lambda must be real and positive, got {lam}")
    rates = params.angular
    scale = lam * math.sqrt(8.0 * rates.kappa * (1.0 - params.r))
    if scale == 0:
        raise CorrelatorError("no light reaches the homodyne detector (r = 1)")
    if rates.Gamma_bw < 10.0 * max(rates.g, rates.kappa):
        logger.warning(
            "detector bandwidth Gamma=%.3g MHz is not large against g and kappa; h is distorted",
            params.Gamma_bw,
        )
    return CorrelationSeries(
        tau=H.tau,
        h=H.values / scale,
        stderr=H.stderr / scale,
        source="trajectory",
        lam=lam,
        n_inc=n_inc,
    )


class ShotNoise(NamedTuple):
    rate: float
    amplitude: float


def expected_shot_noise(params: SystemParams, lam: float, n_starts: int, eta: float = 1.0) -> ShotNoise:
    """Residual detector noise on h: amplitude Gamma / (16 eta N_s kappa (1 - r) lambda^2), rate Gamma."""
    rates = params.angular
    tap = rates.kappa * (1.0 - params.r)
    if tap == 0 or lam == 0 or n_starts <= 0:
        raise CorrelatorError("shot noise is undefined without homodyne light and starts")
    return ShotNoise(
        rate=rates.Gamma_bw,
        amplitude=rates.Gamma_bw / (16.0 * eta * n_starts * tap * lam**2),
    )


@dataclass(frozen=True)
class ShotNoiseFit:
    rate: float
    amplitude: float
    expected_rate: float
    expected_amplitude: float

    @property
    def sigma(self) -> float:
        return math.sqrt(self.amplitude)


def _band_autocorrelation(band, max_lag: int):
    n = len(band)
    return np.array([np.dot(band[: n - lag], band[lag:]) / (n - lag) for lag in range(max_lag + 1)])


def shot_noise_check(h: CorrelationSeries, params: SystemParams, N_s: int, eta: float = 1.0) -> ShotNoiseFit:
    """Fit A exp(-rate tau) to the autocorrelation of h - 1 in the signal-free band."""
    rates = params.angular
    envelope = 0.5 * (rates.kappa + 0.5 * rates.gamma)
    tau_band = BAND_ENVELOPES / envelope
    dtau = h.dtau
    expected = expected_shot_noise(params, h.lam, N_s, eta)

    bands = []
    for tau_half, h_half, _ in (h.positive_half(), h.negative_half()):
        bands.append(h_half[tau_half >= tau_band] - 1.0)
    length = min(len(band) for band in bands) * dtau
    if length * rates.Gamma_bw < MIN_BAND_CORRELATIONS:
        raise CorrelatorError(
            f"signal-free band of {length:.3g} us is too short; extend tau_max beyond {tau_band:.3g} us"
        )

    max_lag = max(2, int(round(5.0 / (rates.Gamma_bw * dtau))))
    correlation = np.mean([_band_autocorrelation(band, max_lag) for band in bands], axis=0)
    lags = np.arange(max_lag + 1) * dtau
    if correlation[0] <= 1e-30:
        return ShotNoiseFit(math.nan, 0.0, expected.rate, expected.amplitude)

    (amplitude, rate), _ = curve_fit(
        lambda t, A, k: A * np.exp(-k * t),
        lags,
        correlation,
        p0=(correlation[0], rates.Gamma_bw),
        maxfev=10_000,
    )
    logger.info("shot noise fit amplitude=%.4e rate=%.4e expected=(%.4e, %.4e)", amplitude, rate, *expected[::-1])
    return ShotNoiseFit(float(rate), float(amplitude), expected.rate, expected.amplitude)


def symmetrize(h: CorrelationSeries) -> CorrelationSeries:
    stderr = None if h.stderr is None else np.sqrt(0.5 * (h.stderr**2 + h.stderr[::-1] ** 2))
    return CorrelationSeries(
        tau=h.tau,
        h=0.5 * (h.h + h.h[::-1]),
        stderr=stderr,
        source=h.source,
        lam=h.lam,
        n_inc=h.n_inc,
    )


def symmetry_defect(h: CorrelationSeries) -> float:
    return float(np.max(np.abs(h.h - h.h[::-1])))


def symmetrize_and_transform(h: CorrelationSeries, F: float, nu_grid, check_tail: bool = True) -> SpectrumSeries:
    return spectrum(symmetrize(h), F, nu_grid, check_tail=check_tail)
