"""Quantum trajectories: photon-count and spontaneous-emission jumps plus the
diffusive homodyne channel, with the filtered photocurrent generated alongside.

A batch of trajectories is advanced in lockstep; every row of the state array
belongs to one trajectory and only ever consumes random numbers from that
trajectory's own stream, so a trajectory's record does not depend on which
other trajectories share its batch beyond the fixed batch partition.
"""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple

import numpy as np
import numpy.typing as npt

from .exceptions import CollapseError, StepSizeError
from .hilbert import SystemParams, build_space, hamiltonian, system_operators
from .steady_state import solve

logger = logging.getLogger(__name__)

MAX_JUMP_PROBABILITY = 0.01
NORM_FLOOR = 1e-8
STEP_SCALE = 1e-3
PHOTOCOUNT_R = 1.0 - 1e-6
PURE_THRESHOLD = 0.999
# Steps of random numbers drawn per trajectory at once
DRAW_BLOCK = 4096


class TrajectoryMode(str, Enum):
    HOMODYNE = "homodyne"
    PHOTOCOUNT = "photocount"


class EventKind(str, Enum):
    CAVITY = "cavity_count"
    SPONT = "spont"


@dataclass(frozen=True)
class TrajectoryEvent:
    kind: EventKind
    time: float
    # 1-based atom index for spontaneous emissions
    atom: int | None = None
    # <A_theta>_c just before and just after the collapse
    field_before: float = 0.0
    field_after: float = 0.0

    @property
    def label(self) -> str:
        return self.kind.value if self.atom is None else f"{self.kind.value}({self.atom})"


@dataclass(eq=False)
class TrajectoryRecord:
    index: int
    seed: int
    params: SystemParams
    mode: TrajectoryMode
    dt: float
    dt_s: float
    current: npt.NDArray[np.float64]
    cond_field: npt.NDArray[np.float64]
    events: list[TrajectoryEvent] = field(default_factory=list)
    initial_state: npt.NDArray[np.complex128] | None = field(default=None, repr=False)
    final_state: npt.NDArray[np.complex128] | None = field(default=None, repr=False)

    @property
    def duration(self) -> float:
        return (len(self.current) - 1) * self.dt_s

    @property
    def times(self) -> npt.NDArray[np.float64]:
        return np.arange(len(self.current)) * self.dt_s

    def events_of(self, kind: EventKind) -> list[TrajectoryEvent]:
        return [event for event in self.events if event.kind is kind]

    def to_csv(self, path) -> None:
        """Samples as (t_us, i, re_a_exp) rows with event rows interleaved in time order."""
        rows = [(t, f"{t:.9e}", f"{i:.9e}", f"{a:.9e}", "") for t, i, a in zip(self.times, self.current, self.cond_field)]
        rows += [(e.time, f"{e.time:.9e}", "", f"{e.field_after:.9e}", e.label) for e in self.events]
        # Stable sort keeps a sample ahead of an event at the same time
        rows.sort(key=lambda row: row[0])
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["t_us", "i", "re_a_exp", "event"])
            writer.writerows(row[1:] for row in rows)


class JumpProbabilities(NamedTuple):
    count: float
    spont: tuple[float, ...]


def stream(base_seed: int, index: int) -> np.random.Generator:
    """Independent generator for trajectory ``index`` of a run seeded with ``base_seed``."""
    return np.random.default_rng(np.random.SeedSequence(entropy=base_seed, spawn_key=(index,)))


class TrajectoryEngine:
    """Precomputed step kernels for one parameter set and detection mode."""

    def __init__(self, params: SystemParams, mode: TrajectoryMode = TrajectoryMode.HOMODYNE, dt: float | None = None):
        self.mode = TrajectoryMode(mode)
        if self.mode is TrajectoryMode.PHOTOCOUNT:
            params = params.replace(r=PHOTOCOUNT_R)
        self.params = params
        self.space = build_space(params)
        ops = system_operators(self.space)
        rates = params.angular

        self.N = params.N
        self.kappa = rates.kappa
        self.gamma = rates.gamma
        self.Gamma = rates.Gamma_bw
        self.r = params.r
        # sqrt(2 kappa (1 - r)); exactly zero when everything goes to the counter
        self.s = math.sqrt(2.0 * rates.kappa * (1.0 - params.r))
        self.phase = np.exp(-1j * params.theta)

        generator = -1j * hamiltonian(params, self.space) - rates.kappa * ops.number
        for excited in ops.excited:
            generator = generator - 0.5 * rates.gamma * excited
        # Row-vector kernels: psi @ M.T == (M psi)
        self.generator_t = np.ascontiguousarray(generator.T)
        self.a_t = np.ascontiguousarray(ops.a.T)
        self.lower_t = tuple(np.ascontiguousarray(op.T) for op in ops.lower)
        self.jumps_t = (self.a_t, *self.lower_t)

        self.dt_s = 1.0 / (10.0 * self.Gamma)
        if dt is None:
            fastest = max(rates.g, rates.kappa, rates.gamma, rates.Gamma_bw, rates.epsilon)
            self.sample_every = int(math.ceil(self.dt_s * fastest / STEP_SCALE - 1e-9))
        else:
            self.sample_every = max(1, int(round(self.dt_s / dt)))
        self.dt = self.dt_s / self.sample_every

    # Batched kernels on (batch, dim) arrays

    def expectations(self, psi):
        a_psi = psi @ self.a_t
        a_mean = np.einsum("bi,bi->b", psi.conj(), a_psi)
        field_value = (self.phase * a_mean).real
        return a_psi, field_value

    def probabilities(self, psi, a_psi=None):
        if a_psi is None:
            a_psi = psi @ self.a_t
        probs = np.empty((psi.shape[0], 1 + self.N))
        probs[:, 0] = 2.0 * self.kappa * self.r * np.einsum("bi,bi->b", a_psi.conj(), a_psi).real * self.dt
        for j, lower_t in enumerate(self.lower_t, start=1):
            low = psi @ lower_t
            probs[:, j] = self.gamma * np.einsum("bi,bi->b", low.conj(), low).real * self.dt
        worst = float(np.max(probs)) if probs.size else 0.0
        if worst > MAX_JUMP_PROBABILITY:
            raise StepSizeError(f"jump probability {worst:.3e} per step exceeds {MAX_JUMP_PROBABILITY} at dt={self.dt:.3e}")
        return probs

    def drift(self, psi, a_psi, field_value, dW):
        """Unnormalized diffusive update followed by normalization."""
        record = 2.0 * self.s * field_value * self.dt + dW
        new = psi + (psi @ self.generator_t) * self.dt
        new = new + (self.s * self.phase) * a_psi * record[:, None]
        norms = np.linalg.norm(new, axis=1)
        if np.any(norms < NORM_FLOOR):
            raise StepSizeError(f"state norm fell to {float(np.min(norms)):.3e} in one step at dt={self.dt:.3e}")
        return new / norms[:, None]

    def current_step(self, current, field_value, dW):
        return current - self.Gamma * (current * self.dt - 2.0 * self.s * field_value * self.dt + dW)

    def collapse(self, psi, channel: int):
        new = psi @ self.jumps_t[channel]
        norms = np.linalg.norm(new, axis=1)
        if np.any(norms == 0):
            raise CollapseError(f"channel {channel} annihilated the state")
        return new / norms[:, None]

    # Trajectory driver

    def initial_state(self):
        rho = solve(self.params).rho
        return rho.dominant_state(), rho.purity

    def default_burn_in(self, purity: float) -> float:
        if purity < PURE_THRESHOLD:
            return 10.0 / self.kappa
        return 10.0 / self.Gamma

    def run(self, indices, base_seed: int, duration: float, burn_in: float | None = None) -> list[TrajectoryRecord]:
        indices = list(indices)
        batch = len(indices)
        psi0, purity = self.initial_state()
        if burn_in is None:
            burn_in = self.default_burn_in(purity)
        every = self.sample_every
        burn_steps = int(round(burn_in / self.dt_s)) * every
        n_samples = int(round(duration / self.dt_s))
        total = burn_steps + n_samples * every

        generators = [stream(base_seed, index) for index in indices]
        psi = np.tile(psi0, (batch, 1))
        a_psi, field_value = self.expectations(psi)
        current = 2.0 * self.s * field_value
        currents = np.empty((batch, n_samples + 1))
        fields = np.empty((batch, n_samples + 1))
        events: list[list[TrajectoryEvent]] = [[] for _ in indices]
        rows = np.arange(batch)
        sqrt_dt = math.sqrt(self.dt)

        uniforms = normals = None
        step = 0
        while step < total:
            block = min(DRAW_BLOCK, total - step)
            uniforms = np.stack([gen.random((block, self.N + 2)) for gen in generators])
            normals = np.stack([gen.standard_normal(block) for gen in generators])
            for k in range(block):
                recording = step >= burn_steps
                if recording and (step - burn_steps) % every == 0:
                    sample = (step - burn_steps) // every
                    currents[:, sample] = current
                    fields[:, sample] = field_value

                dW = sqrt_dt * normals[:, k]
                probs = self.probabilities(psi, a_psi)
                fired = uniforms[:, k, : self.N + 1] < probs
                # The state sees the measured record increment, the current filters it
                drifted = self.drift(psi, a_psi, field_value, -dW)
                current = self.current_step(current, field_value, dW)

                jumped = fired.any(axis=1)
                if jumped.any():
                    weights = np.where(fired, probs, 0.0)
                    cumulative = np.cumsum(weights, axis=1) / weights.sum(axis=1, keepdims=True).clip(min=1e-300)
                    channel = np.argmax(cumulative > uniforms[:, k, -1:], axis=1)
                    for c in np.unique(channel[jumped]):
                        which = rows[jumped & (channel == c)]
                        drifted[which] = self.collapse(psi[which], int(c))
                    psi = drifted
                    a_psi, new_field = self.expectations(psi)
                    if recording:
                        t = (step - burn_steps + 1) * self.dt
                        for b in rows[jumped]:
                            c = int(channel[b])
                            events[b].append(
                                TrajectoryEvent(
                                    kind=EventKind.CAVITY if c == 0 else EventKind.SPONT,
                                    time=t,
                                    atom=None if c == 0 else c,
                                    field_before=float(field_value[b]),
                                    field_after=float(new_field[b]),
                                )
                            )
                    field_value = new_field
                else:
                    psi = drifted
                    a_psi, field_value = self.expectations(psi)
                step += 1

        currents[:, n_samples] = current
        fields[:, n_samples] = field_value
        logger.debug("batch done first=%s size=%d steps=%d", indices[:1], batch, total)
        return [
            TrajectoryRecord(
                index=index,
                seed=base_seed,
                params=self.params,
                mode=self.mode,
                dt=self.dt,
                dt_s=self.dt_s,
                current=currents[b],
                cond_field=fields[b],
                events=events[b],
                initial_state=psi0,
                final_state=psi[b].copy(),
            )
            for b, index in enumerate(indices)
        ]


# Single-state forms of the step kernels


def _single_engine(params: SystemParams, dt: float) -> TrajectoryEngine:
    return TrajectoryEngine(params, TrajectoryMode.HOMODYNE, dt=dt)


def jump_probabilities(psi, params: SystemParams, dt: float) -> JumpProbabilities:
    engine = _single_engine(params, dt)
    engine.dt = dt
    probs = engine.probabilities(np.asarray(psi, dtype=complex)[None, :])[0]
    return JumpProbabilities(count=float(probs[0]), spont=tuple(float(p) for p in probs[1:]))


def apply_collapse(psi, channel: EventKind, params: SystemParams, atom: int = 1):
    engine = _single_engine(params, 1.0)
    index = 0 if EventKind(channel) is EventKind.CAVITY else atom
    return engine.collapse(np.asarray(psi, dtype=complex)[None, :], index)[0]


def drift_step(psi, dW: float, dt: float, params: SystemParams):
    engine = _single_engine(params, dt)
    engine.dt = dt
    batch = np.asarray(psi, dtype=complex)[None, :]
    a_psi, field_value = engine.expectations(batch)
    return engine.drift(batch, a_psi, field_value, np.array([dW]))[0]


def photocurrent_step(i: float, psi, dW: float, dt: float, params: SystemParams) -> float:
    """di = -Gamma (i dt - sqrt(8 kappa (1 - r)) <a_theta>_c dt + dW)."""
    engine = _single_engine(params, dt)
    engine.dt = dt
    _, field_value = engine.expectations(np.asarray(psi, dtype=complex)[None, :])
    return float(engine.current_step(np.array([i]), field_value, np.array([dW]))[0])


def run_trajectory(
    params: SystemParams,
    seed: int,
    duration: float,
    mode: TrajectoryMode = TrajectoryMode.HOMODYNE,
    dt: float | None = None,
    index: int = 0,
    burn_in: float | None = None,
) -> TrajectoryRecord:
    return TrajectoryEngine(params, mode, dt).run([index], seed, duration, burn_in)[0]


def _run_batch(params, mode, dt, indices, base_seed, duration, burn_in):
    return TrajectoryEngine(params, mode, dt).run(indices, base_seed, duration, burn_in)


def run_ensemble(
    params: SystemParams,
    n_traj: int,
    duration: float,
    base_seed: int,
    mode: TrajectoryMode = TrajectoryMode.HOMODYNE,
    workers: int = 1,
    batch_size: int = 32,
    dt: float | None = None,
    burn_in: float | None = None,
    first_index: int = 0,
) -> list[TrajectoryRecord]:
    """Records for trajectories first_index .. first_index + n_traj - 1, in index order."""
    batches = [
        list(range(start, min(start + batch_size, first_index + n_traj)))
        for start in range(first_index, first_index + n_traj, batch_size)
    ]
    logger.info("ensemble start n_traj=%d batches=%d workers=%d duration=%.3g", n_traj, len(batches), workers, duration)
    args = [(params, mode, dt, indices, base_seed, duration, burn_in) for indices in batches]
    if workers > 1 and len(batches) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_batch, *zip(*args)))
    else:
        results = [_run_batch(*arg) for arg in args]
    return [record for batch in results for record in batch]


class EmissionStatistics(NamedTuple):
    n_cavity: int
    n_spont: int
    ratio: float
    sigma: float


def emission_statistics(records) -> EmissionStatistics:
    """Spontaneous emissions per cavity emission.

    Only the fraction r of cavity emissions reaches the counter, so the count
    ratio is scaled by r to compare with 2 N C1.
    """
    n_cavity = sum(len(record.events_of(EventKind.CAVITY)) for record in records)
    n_spont = sum(len(record.events_of(EventKind.SPONT)) for record in records)
    if n_cavity == 0 or n_spont == 0:
        return EmissionStatistics(n_cavity, n_spont, math.nan, math.nan)
    ratio = records[0].params.r * n_spont / n_cavity
    return EmissionStatistics(n_cavity, n_spont, ratio, ratio * math.sqrt(1.0 / n_spont + 1.0 / n_cavity))


class Episode(NamedTuple):
    t_spont: float
    t_cavity: float
    field_jump: float


def spont_then_cavity_episodes(record: TrajectoryRecord, window: float) -> list[Episode]:
    """Cavity clicks whose previous event is a spontaneous emission at most ``window`` earlier."""
    episodes = []
    for previous, event in zip(record.events, record.events[1:]):
        if (
            event.kind is EventKind.CAVITY
            and previous.kind is EventKind.SPONT
            and event.time - previous.time <= window
        ):
            episodes.append(Episode(previous.time, event.time, event.field_after - event.field_before))
    return episodes
