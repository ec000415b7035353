"""Scenario definitions: built-in presets and flat ``key = value`` files."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from enum import Enum
from pathlib import Path

from rest_framework import serializers

from .exceptions import ScenarioError
from .hilbert import SystemParams
from .presets_cache import get_preset, get_presets
from .serializers import ScenarioSerializer
from .trajectory import TrajectoryMode

logger = logging.getLogger(__name__)

LIST_KEYS = {"drive_over_kappa", "gamma_values"}


class ScenarioMode(str, Enum):
    PARAMS = "params"
    QRT = "qrt"
    CORRELATE = "correlate"
    TRAJECTORY_DUMP = "trajectory-dump"
    FWHM_SCAN = "fwhm-scan"
    REGRESSION = "regression"


@dataclass(frozen=True)
class Scenario:
    name: str
    mode: ScenarioMode
    params: SystemParams
    target_X: float | None = None
    # None means the truncation is found by the convergence sweep
    n_max: int | None = None
    seed: int = 0
    starts: int = 1000
    duration: float = 20.0
    n_traj: int = 32
    tau_max: float | None = None
    nu_max: float = 80.0
    nu_points: int = 801
    detection: TrajectoryMode = TrajectoryMode.HOMODYNE
    drive_over_kappa: tuple[float, ...] = ()
    gamma_values: tuple[float, ...] = ()
    normalization: str = "kappa"
    dt: float | None = None

    @classmethod
    def from_validated(cls, data: dict, params: SystemParams) -> Scenario:
        return cls(
            name=data["name"],
            mode=ScenarioMode(data["mode"]),
            params=params,
            target_X=data["target_X"],
            n_max=None if data["n_max"] == "auto" else data["n_max"],
            seed=data["seed"],
            starts=data["starts"],
            duration=data["duration"],
            n_traj=data["n_traj"],
            tau_max=data["tau_max"],
            nu_max=data["nu_max"],
            nu_points=data["nu_points"],
            detection=TrajectoryMode(data["detection"]),
            drive_over_kappa=tuple(data["drive_over_kappa"]),
            gamma_values=tuple(data["gamma_values"]),
            normalization=data["normalization"],
            dt=data["dt"],
        )

    def as_dict(self) -> dict:
        values = asdict(self)
        values["mode"] = self.mode.value
        values["detection"] = self.detection.value
        values["params"] = self.params.as_dict()
        values["drive_over_kappa"] = list(self.drive_over_kappa)
        values["gamma_values"] = list(self.gamma_values)
        return values


def parse_scenario_text(text: str) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment, list values are comma separated."""
    raw = {}
    for number, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ScenarioError(f"line {number}: expected 'key = value', got {line!r}")
        if key in raw:
            raise ScenarioError(f"line {number}: duplicate key {key!r}")
        if key in LIST_KEYS:
            raw[key] = [item.strip() for item in value.split(",") if item.strip()]
        elif value.lower() in ("none", "null", ""):
            raw[key] = None
        else:
            raw[key] = value
    return raw


def raw_scenario(source: str) -> dict:
    """Raw key/values for a preset name or a scenario file path.

    A file may start from a preset with ``preset = <name>`` and override keys.
    """
    preset = get_preset(source)
    if preset is not None:
        preset.setdefault("name", source)
        return preset
    path = Path(source)
    if not path.is_file():
        known = ", ".join(sorted(get_presets()))
        raise ScenarioError(f"{source!r} is neither a preset ({known}) nor a readable file")
    raw = parse_scenario_text(path.read_text())
    base_name = raw.pop("preset", None)
    if base_name is not None:
        base = get_preset(base_name)
        if base is None:
            raise ScenarioError(f"unknown preset {base_name!r} in {path}")
        base["name"] = base_name
        base.update(raw)
        raw = base
    raw.setdefault("name", path.stem)
    return raw


def build_scenario(raw: dict) -> Scenario:
    unknown = set(raw) - set(ScenarioSerializer().fields)
    if unknown:
        raise ScenarioError(f"unknown scenario keys: {', '.join(sorted(unknown))}")
    serializer = ScenarioSerializer(data=raw)
    try:
        serializer.is_valid(raise_exception=True)
    except serializers.ValidationError as exc:
        raise ScenarioError(f"invalid scenario: {exc.detail}")
    return Scenario.from_validated(serializer.validated_data, serializer.to_params())


def load_scenario(source: str, overrides: dict | None = None) -> Scenario:
    raw = raw_scenario(source)
    raw.update({key: value for key, value in (overrides or {}).items() if value is not None})
    scenario = build_scenario(raw)
    logger.info("scenario loaded name=%s mode=%s", scenario.name, scenario.mode.value)
    return scenario
