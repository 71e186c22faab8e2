"""Hypothetical scale points: evaluation under a fitted law and threshold
inversion against the 90% human-level bar.

The built-in table carries three reference situations (current scale plus two
scale-ups); its numeric columns are treated as authoritative and the row
labels as opaque strings. Inversion solves for the resolution or data amount
where the law crosses a threshold, reporting "unreachable" with a sign
diagnosis when the relevant factor is not positive.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .scaling import CanonicalScalingParams, clamp_pct, predict

HUMAN_LEVEL_PCT = 90.0


@dataclass(frozen=True)
class ScenarioSpec:
    label: str
    i: float
    ppi: float
    param_count: float
    expected_precision_pct: float | None = None

    def __post_init__(self):
        if self.i <= 0 or self.ppi <= 0:
            raise ValueError(f"i and ppi must be positive, got ({self.i}, {self.ppi})")


@dataclass(frozen=True)
class ScenarioOutcome:
    predicted_pct: float
    clamped_pct: float
    human_level: bool
    residual_vs_expected: float | None


@dataclass(frozen=True)
class ThresholdSolution:
    value: float | None
    reachable: bool
    diagnosis: str | None = None


def builtin_table1() -> list[ScenarioSpec]:
    """The three reference rows: current scale and the two scale-up cases."""
    return [
        ScenarioSpec(label="Current Test", i=200.0, ppi=256.0, param_count=0.3e9,
                     expected_precision_pct=40.0),
        ScenarioSpec(label="4 x Test", i=2400.0, ppi=1280.0, param_count=9.6e9,
                     expected_precision_pct=65.0),
        ScenarioSpec(label="10 x Test", i=12600.0, ppi=4096.0, param_count=522e9,
                     expected_precision_pct=91.0),
    ]


def evaluate_scenario(params: CanonicalScalingParams, spec: ScenarioSpec,
                      threshold_pct: float = HUMAN_LEVEL_PCT) -> ScenarioOutcome:
    predicted = predict(params, spec.i, spec.ppi)
    clamped = clamp_pct(predicted)
    residual = None
    if spec.expected_precision_pct is not None:
        residual = predicted - spec.expected_precision_pct
    return ScenarioOutcome(
        predicted_pct=predicted,
        clamped_pct=clamped,
        human_level=clamped >= threshold_pct,
        residual_vs_expected=residual,
    )


def solve_threshold_ppi(params: CanonicalScalingParams, i: float,
                        threshold_pct: float = HUMAN_LEVEL_PCT) -> ThresholdSolution:
    """Resolution where the law reaches `threshold_pct` at fixed data amount.

    Solvable in the growing regime only: the data factor c * (ln i + a) must
    be positive, otherwise the threshold cannot be crossed by raising ppi.
    """
    if i <= 0:
        raise ValueError(f"i must be positive, got {i}")
    if threshold_pct <= 0:
        raise ValueError("threshold must be positive")
    factor = params.c * (np.log(i) + params.a)
    if factor <= 0:
        return ThresholdSolution(
            value=None, reachable=False,
            diagnosis=f"data factor c*(ln i + a) = {factor:.6g} is not positive",
        )
    return ThresholdSolution(value=float(np.exp(threshold_pct / factor - params.b)), reachable=True)


def solve_threshold_i(params: CanonicalScalingParams, ppi: float,
                      threshold_pct: float = HUMAN_LEVEL_PCT) -> ThresholdSolution:
    """Data amount where the law reaches `threshold_pct` at fixed resolution."""
    if ppi <= 0:
        raise ValueError(f"ppi must be positive, got {ppi}")
    if threshold_pct <= 0:
        raise ValueError("threshold must be positive")
    factor = params.c * (np.log(ppi) + params.b)
    if factor <= 0:
        return ThresholdSolution(
            value=None, reachable=False,
            diagnosis=f"resolution factor c*(ln ppi + b) = {factor:.6g} is not positive",
        )
    return ThresholdSolution(value=float(np.exp(threshold_pct / factor - params.a)), reachable=True)


SCENARIO_CSV_HEADER = ["label", "i_thousands", "ppi", "param_count", "expected_pct"]


def _format_number(value: float) -> str:
    return repr(int(value)) if float(value).is_integer() else repr(float(value))


def write_scenarios_csv(path: str | Path, scenarios: list[ScenarioSpec]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(SCENARIO_CSV_HEADER)
        for s in scenarios:
            expected = "" if s.expected_precision_pct is None else _format_number(s.expected_precision_pct)
            writer.writerow([s.label, _format_number(s.i), _format_number(s.ppi),
                             _format_number(s.param_count), expected])


def read_scenarios_csv(path: str | Path) -> list[ScenarioSpec]:
    scenarios = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            expected = row.get("expected_pct", "")
            scenarios.append(ScenarioSpec(
                label=row["label"],
                i=float(row["i_thousands"]),
                ppi=float(row["ppi"]),
                param_count=float(row["param_count"]),
                expected_precision_pct=float(expected) if expected else None,
            ))
    return scenarios
