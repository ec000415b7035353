"""Scenario orchestration: parameter preparation, both correlation routes and
the CSV/JSON artifacts of every mode."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from itertools import combinations
from pathlib import Path

import django
import numpy as np
import scipy
from django.conf import settings

from . import __version__
from .correlator import (
    average_conditioned_field,
    average_current,
    collect_batch_starts,
    h_from_current,
    shot_noise_check,
    symmetrize_and_transform,
    symmetry_defect,
    trajectory_tau_grid,
)
from .exceptions import CorrelatorError, PropagationError, ScenarioError, TransformError, WeakFieldError
from .hilbert import SystemParams, derived_params, system_operators
from .qrt import (
    QRTPropagator,
    conditioned_regression,
    default_nu_grid,
    default_tau_grid,
    dominant_frequency,
    fwhm_zero_peak,
    h_exact,
    h_from_qrt,
    spectrum,
    two_time_corr,
)
from .scenarios import Scenario, ScenarioMode
from .steady_state import SteadySolution, calibrate_drive, converge_nmax, solve
from .trajectory import TrajectoryMode, emission_statistics, run_ensemble, spont_then_cavity_episodes
from .weakfield import CollapseKind, constants, emission_ratio, step_ratios, waveform

logger = logging.getLogger(__name__)

WEAK_X = 1e-3
WEAK_N_MAX = 3
STRONG_N_MAX = 10


@dataclass
class RunResult:
    scenario: Scenario
    out_dir: Path
    params: SystemParams
    files: list[str] = field(default_factory=list)
    manifest: dict = field(default_factory=dict)


def prepare_output(out_dir, force: bool = False) -> Path:
    out_dir = Path(out_dir)
    if out_dir.exists() and any(out_dir.iterdir()) and not force:
        raise ScenarioError(f"{out_dir} is not empty; pass --force to overwrite")
    out_dir.mkdir(parents=True, exist_ok=True)
    return out_dir


def resolve_params(params: SystemParams, target_X: float | None = None, n_max: int | None = None) -> SystemParams:
    """Fix the truncation and, when a target X is given, the drive amplitude."""
    if n_max is not None:
        params = params.replace(n_max=n_max)
    elif target_X is not None:
        params = params.replace(n_max=WEAK_N_MAX if target_X <= WEAK_X else STRONG_N_MAX)
    if target_X is not None:
        params = params.replace(epsilon=calibrate_drive(params, target_X))
    if n_max is None:
        converged = converge_nmax(params)
        if converged != params.n_max:
            params = params.replace(n_max=converged)
            if target_X is not None:
                params = params.replace(epsilon=calibrate_drive(params, target_X))
    logger.info("params resolved n_max=%d epsilon=%.6e MHz", params.n_max, params.epsilon)
    return params


class Artifacts:
    """Collects the files written by one run."""

    def __init__(self, out_dir: Path):
        self.out_dir = out_dir
        self.files: list[str] = []

    def csv(self, name: str, columns: dict) -> None:
        data = np.column_stack([np.asarray(values, dtype=float) for values in columns.values()])
        np.savetxt(
            self.out_dir / name,
            data,
            delimiter=",",
            header=",".join(columns),
            comments="",
            fmt="%.10e",
        )
        self.files.append(name)

    def path(self, name: str) -> Path:
        self.files.append(name)
        return self.out_dir / name

    def json(self, name: str, payload: dict) -> None:
        self.path(name).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _quadrature_level(solution: SteadySolution) -> float:
    ops = system_operators(solution.space)
    return solution.rho.expect(ops.quadrature(solution.params.theta)).real


def _qrt_route(scenario: Scenario, solution: SteadySolution, artifacts: Artifacts, nu) -> dict:
    params = solution.params
    propagator = QRTPropagator(solution.L)
    tau = default_tau_grid(params, propagator.slowest_rate())
    C_N = two_time_corr(solution.rho, propagator, params.theta, tau, solution.space)
    h = h_from_qrt(C_N, solution.moments, tau)
    spec = spectrum(h, solution.moments.F, nu)

    artifacts.csv("h_qrt.csv", {"tau_us": h.tau, "h": h.h, "stderr": np.zeros_like(h.h)})
    artifacts.csv("spectrum_qrt.csv", {"nu_MHz": spec.nu, "S": spec.S})
    summary = {
        "tau_max_us": float(tau[-1]),
        "S0": float(spec.S[0]),
        "S_min": float(np.min(spec.S)),
        "nu_at_S_min": float(spec.nu[np.argmin(spec.S)]),
    }
    try:
        exact = h_exact(solution.rho, propagator, params.theta, tau, solution.space, solution.moments)
        artifacts.csv("h_exact.csv", {"tau_us": exact.tau, "h": exact.h})
    except CorrelatorError as exc:
        logger.warning("skipping exact h: %s", exc)
    try:
        summary["fwhm_MHz"] = fwhm_zero_peak(spec)
    except TransformError:
        summary["fwhm_MHz"] = None
    try:
        summary["oscillation_MHz"] = dominant_frequency(h)
    except TransformError:
        summary["oscillation_MHz"] = None
    return {"h": h, "spectrum": spec, "summary": summary}


def start_budget(scenario: Scenario, params: SystemParams, n_bar: float, tau_max: float) -> dict:
    """Expected start clicks from the counter rate 2 kappa r <a^dag a> over all rounds."""
    r = 1.0 if scenario.detection is TrajectoryMode.PHOTOCOUNT else params.r
    rate = 2.0 * params.angular.kappa * r * n_bar
    usable = max(scenario.duration - 2.0 * tau_max, 0.0)
    per_round = rate * scenario.n_traj * usable
    rounds = settings.CQED["MAX_ROUNDS"]
    return {
        "click_rate_per_us": rate,
        "expected_starts_per_round": per_round,
        "expected_starts": per_round * rounds,
        "max_rounds": rounds,
        "trajectory_time_needed_us": scenario.starts / rate if rate > 0 else math.inf,
    }


def _check_budget(scenario: Scenario, budget: dict) -> None:
    if budget["expected_starts"] >= scenario.starts:
        return
    raise CorrelatorError(
        f"expected {budget['expected_starts']:.3g} start clicks in {budget['max_rounds']} rounds, "
        f"{scenario.starts} requested",
        hint=(
            f"about {budget['trajectory_time_needed_us']:.3g} us of usable trajectory time is needed; "
            "lower --starts, raise the drive or the trajectory duration"
        ),
    )


def _collect_records(scenario: Scenario, params: SystemParams, tau_max: float, workers: int):
    cqed = settings.CQED
    records = []
    starts = None
    for round_number in range(1, cqed["MAX_ROUNDS"] + 1):
        records += run_ensemble(
            params,
            scenario.n_traj,
            scenario.duration,
            scenario.seed,
            mode=scenario.detection,
            workers=workers,
            batch_size=cqed["BATCH_SIZE"],
            dt=scenario.dt,
            first_index=len(records),
        )
        try:
            starts = collect_batch_starts(records, tau_max, limit=scenario.starts)
        except CorrelatorError:
            starts = None
        found = 0 if starts is None else starts.N_s
        logger.info("round=%d trajectories=%d starts=%d/%d", round_number, len(records), found, scenario.starts)
        if found >= scenario.starts:
            break
    else:
        logger.warning(
            "stopped after %d rounds with %d of %d starts", cqed["MAX_ROUNDS"], found, scenario.starts
        )
    if starts is None:
        raise CorrelatorError(f"no usable start clicks in {len(records)} trajectories")
    return records, starts


def _run_params(scenario, solution, artifacts, workers) -> dict:
    return {}


def _run_qrt(scenario, solution, artifacts, workers) -> dict:
    nu = default_nu_grid(scenario.nu_max, scenario.nu_points)
    return _qrt_route(scenario, solution, artifacts, nu)["summary"]


def _run_correlate(scenario, solution, artifacts, workers) -> dict:
    params = solution.params
    rates = params.angular
    tau_max = scenario.tau_max or 12.0 / (0.5 * (rates.kappa + 0.5 * rates.gamma))
    budget = start_budget(scenario, params, solution.moments.n_bar, tau_max)
    _check_budget(scenario, budget)

    nu = default_nu_grid(scenario.nu_max, scenario.nu_points)
    qrt = _qrt_route(scenario, solution, artifacts, nu)
    level = _quadrature_level(solution)
    records, starts = _collect_records(scenario, params, tau_max, workers)
    tau = trajectory_tau_grid(records[0].dt_s, tau_max)
    stats = emission_statistics(records)
    summary = {
        "qrt": qrt["summary"],
        "N_s": starts.N_s,
        "trajectories": len(records),
        "emission": stats._asdict(),
        "start_budget": budget,
    }

    if scenario.detection is TrajectoryMode.PHOTOCOUNT:
        field_avg = average_conditioned_field(records, starts, tau, level)
        artifacts.csv(
            "conditioned_field.csv",
            {"tau_us": field_avg.tau, "field_over_lambda": field_avg.values, "stderr": field_avg.stderr},
        )
        summary["field_at_click"] = float(field_avg.values[len(tau) // 2])
        return summary

    H = average_current(records, starts, tau)
    h = h_from_current(H, level, params, solution.moments.n_inc)
    artifacts.csv("h_traj.csv", {"tau_us": h.tau, "h": h.h, "stderr": h.stderr})
    spec = symmetrize_and_transform(h, solution.moments.F, nu)
    artifacts.csv("spectrum_traj.csv", {"nu_MHz": spec.nu, "S": spec.S})

    reference = qrt["spectrum"].S
    summary["spectrum_rel_rms"] = float(np.sqrt(np.mean((spec.S - reference) ** 2) / np.mean(reference**2)))
    summary["symmetry_defect"] = symmetry_defect(h)
    try:
        fit = shot_noise_check(h, params, starts.N_s)
        summary["shot_noise"] = asdict(fit) | {"sigma": fit.sigma}
    except CorrelatorError as exc:
        logger.warning("shot noise fit skipped: %s", exc)
        summary["shot_noise"] = None
    try:
        summary["fwhm_MHz"] = fwhm_zero_peak(spec)
    except TransformError:
        summary["fwhm_MHz"] = None
    return summary


def _run_trajectory_dump(scenario, solution, artifacts, workers) -> dict:
    params = solution.params
    records = run_ensemble(
        params,
        scenario.n_traj,
        scenario.duration,
        scenario.seed,
        mode=scenario.detection,
        workers=workers,
        batch_size=settings.CQED["BATCH_SIZE"],
        dt=scenario.dt,
    )
    window = 2.0 / params.angular.kappa
    episodes = 0
    for record in records:
        record.to_csv(artifacts.path(f"traj_{record.index:04d}.csv"))
        episodes += len(spont_then_cavity_episodes(record, window))
    return {
        "trajectories": len(records),
        "emission": emission_statistics(records)._asdict(),
        "spont_then_cavity_episodes": episodes,
    }


def _max_gap(curves: dict, key: str) -> float:
    if len(curves) < 2:
        return 0.0
    gaps = []
    for a, b in combinations(curves, 2):
        diff = np.abs(np.asarray(curves[a][key]) - np.asarray(curves[b][key]))
        diff = diff[np.isfinite(diff)]
        if diff.size:
            gaps.append(float(np.max(diff)))
    return max(gaps) if gaps else math.nan


def _run_fwhm_scan(scenario, solution, artifacts, workers) -> dict:
    base = solution.params
    nu = default_nu_grid(scenario.nu_max, scenario.nu_points)
    columns = {name: [] for name in ("gamma_MHz", "drive_over_kappa", "epsilon_MHz", "n_max", "fwhm_MHz", "fwhm_over_kappa", "fwhm_over_gamma")}
    curves = {}
    for gamma in scenario.gamma_values or (base.gamma,):
        curve = {"fwhm_over_kappa": [], "fwhm_over_gamma": []}
        for drive in scenario.drive_over_kappa:
            params = base.replace(gamma=gamma, epsilon=drive * base.kappa)
            params = resolve_params(params, n_max=scenario.n_max)
            point = solve(params)
            try:
                propagator = QRTPropagator(point.L)
                tau = default_tau_grid(params, propagator.slowest_rate())
                C_N = two_time_corr(point.rho, propagator, params.theta, tau, point.space)
                spec = spectrum(h_from_qrt(C_N, point.moments, tau), point.moments.F, nu)
                width = fwhm_zero_peak(spec)
            except (PropagationError, TransformError) as exc:
                logger.warning("no width for gamma=%.3g drive=%.3g: %s", gamma, drive, exc)
                width = math.nan
            row = (gamma, drive, params.epsilon, params.n_max, width, width / base.kappa, width / gamma)
            for name, value in zip(columns, row):
                columns[name].append(value)
            curve["fwhm_over_kappa"].append(width / base.kappa)
            curve["fwhm_over_gamma"].append(width / gamma)
        curves[gamma] = curve
    artifacts.csv("fwhm_scan.csv", columns)

    summary = {"points": len(columns["fwhm_MHz"])}
    if scenario.normalization in ("kappa", "both"):
        summary["max_gap_kappa"] = _max_gap(curves, "fwhm_over_kappa")
    if scenario.normalization in ("gamma", "both"):
        summary["max_gap_gamma"] = _max_gap(curves, "fwhm_over_gamma")
    return summary


def _run_regression(scenario, solution, artifacts, workers) -> dict:
    params = solution.params
    consts = constants(params)
    ops = system_operators(solution.space)
    propagator = QRTPropagator(solution.L)
    tau = default_tau_grid(params)
    jumps = {CollapseKind.CAVITY: ops.a, CollapseKind.SPONTANEOUS: ops.lower[0]}

    columns = {"tau_us": tau}
    numeric_steps = {}
    for kind, jump in jumps.items():
        analytic = waveform(consts, kind, tau)
        numeric = conditioned_regression(solution.rho, propagator, jump, params.theta, tau, solution.space)
        columns[f"analytic_{kind.value}"] = analytic.values
        columns[f"numeric_{kind.value}"] = numeric
        numeric_steps[kind.value] = float(numeric[0])
    artifacts.csv("regression.csv", columns)
    return {
        "analytic_steps": step_ratios(consts),
        "numeric_steps": numeric_steps,
        "envelope_rate": consts.envelope_rate,
    }


HANDLERS = {
    ScenarioMode.PARAMS: _run_params,
    ScenarioMode.QRT: _run_qrt,
    ScenarioMode.CORRELATE: _run_correlate,
    ScenarioMode.TRAJECTORY_DUMP: _run_trajectory_dump,
    ScenarioMode.FWHM_SCAN: _run_fwhm_scan,
    ScenarioMode.REGRESSION: _run_regression,
}


def _finite(value):
    # Strict JSON has no NaN or infinity
    if isinstance(value, dict):
        return {key: _finite(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_finite(item) for item in value]
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def build_manifest(scenario: Scenario, solution: SteadySolution, summary: dict, files: list[str]) -> dict:
    params, moments = solution.params, solution.moments
    try:
        weak = constants(params).as_dict()
    except WeakFieldError as exc:
        weak = {"error": str(exc)}
    return _finite(
        {
            "scenario": scenario.as_dict(),
            "params": params.as_dict(),
            "n_max": params.n_max,
            "derived": derived_params(params, moments.lam, moments.n_bar).as_dict(),
            "weak_field": weak,
            "emission_ratio": emission_ratio(params),
            "moments": moments.as_dict(),
            "summary": summary,
            "files": sorted(files),
            "versions": {
                "cqed_app": __version__,
                "django": django.get_version(),
                "numpy": np.__version__,
                "scipy": scipy.__version__,
            },
        }
    )


def run(scenario: Scenario, out_dir, force: bool = False, workers: int = 1) -> RunResult:
    """Execute ``scenario`` and write its artifacts and manifest.json into ``out_dir``."""
    out_dir = prepare_output(out_dir, force)
    artifacts = Artifacts(out_dir)
    params = scenario.params
    if scenario.mode is not ScenarioMode.FWHM_SCAN:
        params = resolve_params(params, scenario.target_X, scenario.n_max)
    elif scenario.n_max is not None:
        params = params.replace(n_max=scenario.n_max)
    solution = solve(params)

    logger.info("run start scenario=%s mode=%s out=%s", scenario.name, scenario.mode.value, out_dir)
    summary = HANDLERS[scenario.mode](scenario, solution, artifacts, workers)
    manifest = build_manifest(scenario, solution, summary, artifacts.files + ["manifest.json"])
    artifacts.json("manifest.json", manifest)
    logger.info("run done scenario=%s files=%d", scenario.name, len(artifacts.files))
    return RunResult(scenario=scenario, out_dir=out_dir, params=params, files=artifacts.files, manifest=manifest)
