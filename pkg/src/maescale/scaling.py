"""The log-log accuracy law: prediction, reparameterization, and fitting.

The law is a product of terms affine in log scale,

    precision(i, ppi) = c * (ln i + a) * (ln ppi + b),

where i is data amount in thousands of images and ppi the resolution scalar.
The four-parameter raw form (alpha_i, beta_i, alpha_ppi, beta_ppi) carries a
one-dimensional gauge freedom, so fitting happens in the canonical (c, a, b)
form: c = alpha_i * alpha_ppi, a = beta_i / alpha_i, b = beta_ppi / alpha_ppi.

Fitting minimizes squared residuals with damped Gauss-Newton iterations from
every start of a fixed coarse grid and keeps the best converged run, ties
resolved by start index. Everything is deterministic.
"""

from __future__ import annotations

import csv
import itertools
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .errors import IdentifiabilityError, NumericError


@dataclass(frozen=True)
class RawScalingParams:
    alpha_i: float
    beta_i: float
    alpha_ppi: float
    beta_ppi: float


@dataclass(frozen=True)
class CanonicalScalingParams:
    c: float
    a: float
    b: float


@dataclass(frozen=True)
class ScalingPoint:
    i: float
    ppi: float
    accuracy_pct: float

    def __post_init__(self):
        if self.i <= 0 or self.ppi <= 0:
            raise ValueError(f"i and ppi must be positive, got ({self.i}, {self.ppi})")


@dataclass(frozen=True)
class FitResult:
    params: CanonicalScalingParams
    rmse: float
    n_points: int
    objective: float
    start_count: int = 0


def predict(params: CanonicalScalingParams, i: float, ppi: float) -> float:
    """Unclamped precision at (i, ppi); use `clamp_pct` for display."""
    if i <= 0 or ppi <= 0:
        raise ValueError(f"i and ppi must be positive, got ({i}, {ppi})")
    return params.c * (np.log(i) + params.a) * (np.log(ppi) + params.b)


def clamp_pct(value: float) -> float:
    return min(max(value, 0.0), 100.0)


def predict_raw(raw: RawScalingParams, i: float, ppi: float) -> float:
    if i <= 0 or ppi <= 0:
        raise ValueError(f"i and ppi must be positive, got ({i}, {ppi})")
    return (raw.alpha_i * np.log(i) + raw.beta_i) * (raw.alpha_ppi * np.log(ppi) + raw.beta_ppi)


def gauge_transform(raw: RawScalingParams, t: float) -> RawScalingParams:
    """The prediction-preserving reparameterization for any t != 0."""
    if t == 0:
        raise ValueError("gauge factor must be nonzero")
    return RawScalingParams(t * raw.alpha_i, t * raw.beta_i, raw.alpha_ppi / t, raw.beta_ppi / t)


def canonicalize(raw: RawScalingParams) -> CanonicalScalingParams:
    if raw.alpha_i == 0 or raw.alpha_ppi == 0:
        raise ValueError("alpha_i and alpha_ppi must be nonzero to canonicalize")
    return CanonicalScalingParams(
        c=raw.alpha_i * raw.alpha_ppi,
        a=raw.beta_i / raw.alpha_i,
        b=raw.beta_ppi / raw.alpha_ppi,
    )


def raw_of(params: CanonicalScalingParams) -> RawScalingParams:
    """Gauge-fixed raw representative with alpha_ppi = 1."""
    return RawScalingParams(alpha_i=params.c, beta_i=params.c * params.a,
                            alpha_ppi=1.0, beta_ppi=params.b)


def check_identifiability(points: list[ScalingPoint]) -> str | None:
    """None when the point set can pin down (c, a, b); otherwise the defect."""
    if len(points) < 3:
        return "need >= 3 points for 3 parameters"
    if len({p.i for p in points}) < 2:
        return "i not varied"
    if len({p.ppi for p in points}) < 2:
        return "ppi not varied"
    return None


DEFAULT_START_C = (-10.0, -1.0, -0.1, 0.1, 1.0, 10.0)
DEFAULT_START_AB = (-10.0, -5.0, -2.0, 0.0, 2.0, 5.0, 10.0)


def default_starts() -> list[tuple[float, float, float]]:
    return list(itertools.product(DEFAULT_START_C, DEFAULT_START_AB, DEFAULT_START_AB))


def _levenberg_run(log_i: np.ndarray, log_ppi: np.ndarray, acc: np.ndarray,
                   start: tuple[float, float, float], tol: float,
                   max_iter: int = 100) -> tuple[np.ndarray, float, bool]:
    theta = np.asarray(start, dtype=np.float64)

    def residual(t):
        c, a, b = t
        return c * (log_i + a) * (log_ppi + b) - acc

    r = residual(theta)
    obj = float(r @ r)
    lam = 1e-3
    converged = False
    for _ in range(max_iter):
        c, a, b = theta
        u = log_i + a
        v = log_ppi + b
        jac = np.column_stack([u * v, c * v, c * u])
        grad = jac.T @ r
        hess = jac.T @ jac
        step = None
        while lam <= 1e14:
            try:
                delta = np.linalg.solve(hess + lam * np.eye(3), -grad)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            cand = theta + delta
            r_cand = residual(cand)
            obj_cand = float(r_cand @ r_cand)
            if np.isfinite(obj_cand) and obj_cand <= obj:
                theta, r, obj = cand, r_cand, obj_cand
                lam = max(lam / 3.0, 1e-14)
                step = delta
                break
            lam *= 10.0
        if step is None:
            break
        if float(np.linalg.norm(step)) < tol:
            converged = True
            break
    return theta, obj, converged


def fit(points: list[ScalingPoint], starts: list[tuple[float, float, float]] | None = None,
        tol: float = 1e-10) -> FitResult:
    """Least-squares fit of (c, a, b) over the multi-start grid.

    Raises IdentifiabilityError when the points cannot pin the parameters and
    NumericError when no start converges.
    """
    defect = check_identifiability(points)
    if defect is not None:
        raise IdentifiabilityError(defect)
    if starts is None:
        starts = default_starts()
    log_i = np.array([np.log(p.i) for p in points])
    log_ppi = np.array([np.log(p.ppi) for p in points])
    acc = np.array([p.accuracy_pct for p in points])

    best: tuple[float, np.ndarray] | None = None
    for theta0 in starts:
        theta, obj, converged = _levenberg_run(log_i, log_ppi, acc, theta0, tol)
        if converged and np.all(np.isfinite(theta)):
            if best is None or obj < best[0]:
                best = (obj, theta)
    if best is None:
        raise NumericError(
            f"no start converged over {len(starts)} starts; residuals may be unbounded"
        )
    obj, theta = best
    return FitResult(
        params=CanonicalScalingParams(c=float(theta[0]), a=float(theta[1]), b=float(theta[2])),
        rmse=float(np.sqrt(obj / len(points))),
        n_points=len(points),
        objective=float(obj),
        start_count=len(starts),
    )


def fit_result_to_dict(result: FitResult) -> dict:
    return {
        "c": result.params.c,
        "a": result.params.a,
        "b": result.params.b,
        "rmse": result.rmse,
        "n_points": result.n_points,
        "objective": result.objective,
    }


def fit_result_from_dict(payload: dict) -> FitResult:
    return FitResult(
        params=CanonicalScalingParams(c=float(payload["c"]), a=float(payload["a"]), b=float(payload["b"])),
        rmse=float(payload["rmse"]),
        n_points=int(payload["n_points"]),
        objective=float(payload["objective"]),
    )


def save_fit_result(path: str | Path, result: FitResult) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(fit_result_to_dict(result), fh, sort_keys=True, indent=2)
        fh.write("\n")


def read_points_csv(path: str | Path) -> list[ScalingPoint]:
    """CSV with header i,ppi,accuracy_pct."""
    points = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            points.append(ScalingPoint(float(row["i"]), float(row["ppi"]), float(row["accuracy_pct"])))
    return points


def write_points_csv(path: str | Path, points: list[ScalingPoint]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["i", "ppi", "accuracy_pct"])
        for p in points:
            writer.writerow([repr(p.i), repr(p.ppi), repr(p.accuracy_pct)])


class ScalingLawRegressor(BaseEstimator, RegressorMixin):
    """sklearn-style wrapper: X columns are (i, ppi), y is accuracy percent."""

    def __init__(self, tol: float = 1e-10):
        self.tol = tol

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        if X.shape[1] != 2:
            raise ValueError("X must have exactly two columns: (i, ppi)")
        points = [ScalingPoint(float(i), float(ppi), float(acc)) for (i, ppi), acc in zip(X, y)]
        result = fit(points, tol=self.tol)
        self.result_ = result
        self.c_ = result.params.c
        self.a_ = result.params.a
        self.b_ = result.params.b
        self.rmse_ = result.rmse
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "result_")
        X = check_array(X)
        params = self.result_.params
        return np.array([predict(params, float(i), float(ppi)) for i, ppi in X])
