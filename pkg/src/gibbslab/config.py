"""Experiment configuration: YAML files validated against a pydantic schema."""
from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path
from typing import Any, Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .lattice import box
from .specification import Boundary, Phase, Potential, SpinGrid, SpinModel

SCENARIO_NAMES = (
    "orlicz-suite", "one-site-constants", "tensorisation", "sweep-convergence",
    "gradient-sweep", "entropy-decay", "tail-product", "tail-gibbs", "enlargement",
    "talagrand", "perturbation-s3",
)


class ConfigError(ValueError):
    """Raised for schema violations and malformed overrides."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class PhaseConfig(_Strict):
    kind: Literal["gaussian", "power", "perturbed", "double_well"] = "gaussian"
    p: float = 2.0
    delta: float = 0.5
    sigma: float = 1.0


class PotentialConfig(_Strict):
    kind: Literal["bilinear", "squared_difference"] = "bilinear"


class GridConfig(_Strict):
    half_width: float | None = Field(None, gt=0)
    n: int = Field(513, ge=9)


class BoundaryConfig(_Strict):
    kind: Literal["const"] = "const"
    value: float = 0.0


class ModelConfig(_Strict):
    d: int = Field(1, ge=1, le=3)
    phase: PhaseConfig = PhaseConfig()
    potential: PotentialConfig = PotentialConfig()
    J: float = 0.0
    J0: float | None = None
    box_radius: int = Field(3, ge=0)
    grid: GridConfig = GridConfig()
    boundary: BoundaryConfig = BoundaryConfig()


class OrliczConfig(_Strict):
    """Phi = |x|^p / p; H is its modification (p=2 gives H = x^2)."""

    phi: Literal["power"] = "power"
    p: float = Field(2.0, gt=1)


class SamplerConfig(_Strict):
    samples: int = Field(100_000, ge=1)
    burn_in: int = Field(200, ge=0)
    chains: int = Field(200, ge=1)
    seed: int


class KnobConfig(_Strict):
    """Scenario-specific settings; unset values take the scenario default."""

    r_grid: list[float] | None = None
    r_span: float | None = None
    r_points: int | None = None
    lambda_grid: list[float] | None = None
    k_max: int | None = None
    s: int | None = None
    epsilon: float | None = None
    c: float | None = None
    c_hat: float | None = None
    a: float | None = None
    couplings: list[float] | None = None
    boundary_values: list[float] | None = None
    boundary_samples: int | None = None
    witnesses: int | None = None
    grid_sizes: list[int] | None = None
    powers: list[float] | None = None
    phi_powers: list[float] | None = None
    gauge_power: float | None = None
    young_pairs: int | None = None
    thetas: list[float] | None = None
    budget: int | None = None
    steps: int | None = None


class ExperimentConfig(_Strict):
    scenario: Literal[SCENARIO_NAMES]  # type: ignore[valid-type]
    model: ModelConfig = ModelConfig()
    orlicz: OrliczConfig = OrliczConfig()
    sampler: SamplerConfig
    knobs: KnobConfig = KnobConfig()

    def knob(self, name: str, default):
        value = getattr(self.knobs, name)
        return default if value is None else value

    def spin_model(self) -> SpinModel:
        m = self.model
        phase = Phase(m.phase.kind, m.phase.p, m.phase.delta, m.phase.sigma)
        half = m.grid.half_width or phase.default_half_width
        return SpinModel(m.d, phase, Potential(m.potential.kind), m.J, m.J0, SpinGrid(half, m.grid.n))

    def region(self):
        return box(self.model.d, self.model.box_radius)

    def boundary(self) -> Boundary:
        return Boundary(self.model.boundary.value)

    def canonical(self) -> dict[str, Any]:
        return self.model_dump(mode="json")

    def digest(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()


def parse_override(text: str) -> tuple[list[str], Any]:
    if "=" not in text:
        raise ConfigError(f"override {text!r} must look like key.path=value")
    key, raw = text.split("=", 1)
    path = [p for p in key.strip().split(".") if p]
    if not path:
        raise ConfigError(f"override {text!r} has an empty key")
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse value in override {text!r}: {exc}") from None
    return path, value


def apply_overrides(data: dict, overrides: list[str]) -> dict:
    out = copy.deepcopy(data)
    for text in overrides:
        path, value = parse_override(text)
        node = out
        for part in path[:-1]:
            nxt = node.setdefault(part, {})
            if not isinstance(nxt, dict):
                raise ConfigError(f"override {text!r}: {part!r} is not a section")
            node = nxt
        node[path[-1]] = value
    return out


def validate(data: dict) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        lines = []
        for err in exc.errors():
            where = ".".join(str(p) for p in err["loc"]) or "<root>"
            lines.append(f"  {where}: {err['msg']}")
        raise ConfigError("invalid configuration:\n" + "\n".join(lines)) from None


def load_config(path: str | Path | None = None, overrides: list[str] = (),
                seed: int | None = None, data: dict | None = None) -> ExperimentConfig:
    """Read YAML (or take ``data``), apply ``--set`` overrides and ``--seed``, validate."""
    if data is None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        try:
            data = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"config {path} is not valid YAML: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    data = apply_overrides(data, list(overrides))
    if seed is not None:
        data.setdefault("sampler", {})
        if not isinstance(data["sampler"], dict):
            raise ConfigError("sampler must be a mapping")
        data["sampler"]["seed"] = seed
    return validate(data)


def schema() -> dict:
    return ExperimentConfig.model_json_schema()
