"""Core way to access configuration"""

from __future__ import annotations

import math
import os
import pathlib
import tomllib
from typing import Annotated, Literal

import pydantic

Positive = Annotated[float, pydantic.Field(gt=0)]
PositiveInt = Annotated[int, pydantic.Field(ge=1)]


def threads() -> int:
    """Workers used by sweeps, capped by ``QECSTEP_THREADS``"""
    value = os.environ.get("QECSTEP_THREADS")
    if not value:
        return os.cpu_count() or 1

    try:
        count = int(value)
    except ValueError as exc:
        raise ValueError(f'QECSTEP_THREADS must be an integer, got "{value}"') from exc
    if count < 1:
        raise ValueError(f"QECSTEP_THREADS must be >= 1, got {count}")

    return count


def log_level() -> str:
    """The default log level of the command line, from ``QECSTEP_LOG_LEVEL``"""
    return os.environ.get("QECSTEP_LOG_LEVEL", "WARNING").upper()


def quadrature_nodes() -> int:
    """Gauss-Legendre nodes per integral when a config does not set them"""
    return 32


class _Section(pydantic.BaseModel):
    model_config = pydantic.ConfigDict(extra="forbid", frozen=True)


class GateConfig(_Section):
    kind: Literal["rotation", "cnot", "idle"] = "rotation"
    omega0: Positive = 1.0
    theta: float = 0.0
    phi: float = 0.0
    angle: Positive = math.pi / 2
    logical: bool = True
    duration: Positive | None = None
    blocks: PositiveInt = 1


class NoiseConfig(_Section):
    backend: Literal["stochastic", "exact"] = "stochastic"
    lam: Annotated[float, pydantic.Field(ge=0)] = 1e-2
    frequencies: tuple[Positive, ...] | None = None
    substeps: PositiveInt = 4
    reset_bath: bool = False
    flip_probability: Annotated[float, pydantic.Field(ge=0, le=1)] | None = None
    flip_axis: Literal["X", "Y", "Z"] = "Z"
    failure_threshold: Positive | None = None


class SweepConfig(_Section):
    """Protocol sweeps: over coupling strengths, over step counts, or a single run"""

    axis: Literal["lambda", "steps", "single"] = "lambda"
    lambdas: tuple[Positive, ...] = (1e-1, 10**-1.5, 1e-2, 10**-2.5, 1e-3)
    steps: tuple[PositiveInt, ...] = (4, 8, 16, 32, 64, 128)
    n_steps: PositiveInt = 10
    n_rule: Literal["fixed", "sqrt"] = "sqrt"
    n_scale: Positive = 1.0
    baseline: bool = True


class PerturbConfig(_Section):
    lambdas: tuple[Positive, ...] = (1e-1, 10**-1.25, 10**-1.5, 10**-1.75, 1e-2)
    time: Positive = 1.0
    nodes: Annotated[int, pydantic.Field(ge=4)] = pydantic.Field(
        default_factory=quadrature_nodes
    )
    inner_limit: Literal["auto", "triangle", "square"] = "auto"
    steps: tuple[PositiveInt, ...] = (10, 20, 50, 100, 200)


class SynthConfig(_Section):
    gates: tuple[Literal["sigma_x", "cnot"], ...] = ("sigma_x", "cnot")
    orders: tuple[Literal[2, 3], ...] = (2, 3)
    steps: tuple[PositiveInt, ...] = (10, 30, 100, 300, 1000)
    epsilons: tuple[Positive, ...] = (0.02, 0.03, 0.05, 0.07, 0.1, 0.2)


class OutputConfig(_Section):
    directory: str = "results"
    verbose_records: bool = False


class ExperimentConfig(_Section):
    """A complete experiment, as read from a TOML file.

    ``initial_state`` holds one ``(polar, azimuth)`` Bloch angle pair per code block.
    """

    command: Literal["verify", "perturb", "synth", "protocol"] = "protocol"
    seed: Annotated[int, pydantic.Field(ge=0, lt=2**64)] = 0
    trials: PositiveInt = 10_000
    initial_state: tuple[tuple[float, float], ...] = ((math.pi / 3, math.pi / 4),)
    verbosity: Literal["DEBUG", "INFO", "WARNING", "ERROR"] | None = None
    gate: GateConfig = GateConfig()
    noise: NoiseConfig = NoiseConfig()
    sweep: SweepConfig = SweepConfig()
    perturb: PerturbConfig = PerturbConfig()
    synth: SynthConfig = SynthConfig()
    output: OutputConfig = OutputConfig()


def load(path: str | pathlib.Path) -> ExperimentConfig:
    """Parse an experiment file.

    Raises:
        FileNotFoundError: When the file does not exist.
        tomllib.TOMLDecodeError: On malformed TOML.
        pydantic.ValidationError: On unknown keys or invalid values.
    """
    with open(path, "rb") as f:
        return ExperimentConfig.model_validate(tomllib.load(f))


def get(path: str | pathlib.Path | None = None, **overrides) -> ExperimentConfig:
    """Get a configuration with overrides.

    Overrides whose value is None are ignored so that command-line options can be
    passed through as parsed. Nested keys use a double underscore, for example
    ``output__directory``.
    """
    cfg = load(path) if path else ExperimentConfig()
    data = cfg.model_dump()
    for key, val in overrides.items():
        if val is None:
            continue
        section, _, name = key.partition("__")
        if name:
            data[section][name] = val
        else:
            data[section] = val

    return ExperimentConfig.model_validate(data)


def dumps(cfg: ExperimentConfig) -> str:
    return cfg.model_dump_json(indent=2)
