"""CSV and JSON result files.

Floats are written with 17 significant digits so that every value reads back
to the same double.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import pathlib
from collections.abc import Iterable, Sequence
from typing import Any, Final

import numpy as np

from qecstep.protocol import ScalingRow
from qecstep.synthesis import SweepRow

PERTURB_COLUMNS: Final = ("lambda", "residual_trace_norm")
SYNTH_COLUMNS: Final = ("gate", "order", "N", "epsilon", "initial_state", "infidelity")
PROTOCOL_COLUMNS: Final = (
    "lambda",
    "N",
    "backend",
    "correction_rate",
    "failure_rate",
    "trials",
    "ci_low",
    "ci_high",
    "expected_corrections",
    "expected_failure",
)


def format_value(val: Any) -> str:
    if isinstance(val, bool | np.bool_):
        return "true" if val else "false"
    if isinstance(val, float | np.floating):
        return format(float(val), ".17g")

    return str(val)


def write_csv(
    path: str | pathlib.Path, columns: Sequence[str], rows: Iterable[Sequence[Any]]
) -> pathlib.Path:
    path = pathlib.Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            if len(row) != len(columns):
                raise ValueError(f"Row {row} does not match columns {columns}")
            writer.writerow([format_value(val) for val in row])

    return path


def write_perturb(
    path: str | pathlib.Path, rows: Iterable[tuple[float, float]]
) -> pathlib.Path:
    return write_csv(path, PERTURB_COLUMNS, rows)


def write_synth(path: str | pathlib.Path, rows: Iterable[SweepRow]) -> pathlib.Path:
    return write_csv(
        path,
        SYNTH_COLUMNS,
        (
            (row.gate, row.order, row.n, row.epsilon, row.initial_state, row.infidelity)
            for row in rows
        ),
    )


def write_protocol(path: str | pathlib.Path, rows: Iterable[ScalingRow]) -> pathlib.Path:
    return write_csv(
        path,
        PROTOCOL_COLUMNS,
        (
            (
                row.lam,
                row.n,
                row.backend,
                row.correction_rate,
                row.failure_rate,
                row.trials,
                row.ci_low,
                row.ci_high,
                row.expected_corrections,
                row.expected_failure,
            )
            for row in rows
        ),
    )


def _default(val: Any) -> Any:
    if isinstance(val, np.ndarray):
        return val.tolist()
    if isinstance(val, np.generic):
        return val.item()
    if dataclasses.is_dataclass(val) and not isinstance(val, type):
        return dataclasses.asdict(val)

    raise TypeError(f"Object of type {type(val).__name__} is not JSON serializable")


def dumps(data: Any) -> str:
    return json.dumps(data, indent=2, sort_keys=True, default=_default)


def write_json(path: str | pathlib.Path, data: Any) -> pathlib.Path:
    path = pathlib.Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(data) + "\n")
    return path
