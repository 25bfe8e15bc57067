"""Rolling (expanding-window) cross-validation of power-law regressions.

Points are ordered by FLOP budget. Each step fits on the first k points and
predicts point k, so evaluation is always on a strictly later budget.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

from .numerics import PowerLaw, fit_power_law

DEFAULT_MIN_TRAIN = 6
TRAJECTORY_COLUMNS = ("regression_name", "train_size", "b0", "b1", "predicted", "actual", "abs_error")


@dataclass(frozen=True)
class CvStep:
    train_size: int
    eval_budget: float
    predicted: float
    actual: float
    rmse: float
    b0: float
    b1: float
    failed: bool = False
    error: Optional[str] = None


@dataclass(frozen=True)
class CvReport:
    regression_name: str
    steps: tuple[CvStep, ...] = ()
    mean_rmse: float = math.nan
    error: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "regression_name": self.regression_name,
            "mean_rmse": self.mean_rmse,
            "error": self.error,
            "steps": [s.__dict__ for s in self.steps],
        }


def rolling_cv(
    points: Sequence[tuple[float, float]],
    min_train: int = DEFAULT_MIN_TRAIN,
    fit: Callable[[Sequence[tuple[float, float]]], PowerLaw] = fit_power_law,
    name: str = "",
    budgets: Optional[Sequence[float]] = None,
) -> CvReport:
    """One-step-ahead expanding-window CV; errors are measured in linear space.

    Time order is x itself unless `budgets` gives each point's FLOP budget
    (needed when x is not FLOPs, e.g. return against optimal loss).
    """
    pts = [(float(x), float(y)) for x, y in points]
    if min_train < 2:
        raise ValueError("min_train must be at least 2")
    if len(pts) < min_train + 1:
        raise ValueError(f"rolling CV needs at least {min_train + 1} points, got {len(pts)}")
    times = [x for x, _ in pts] if budgets is None else [float(b) for b in budgets]
    if len(times) != len(pts):
        raise ValueError("budgets and points differ in length")
    if any(b <= a for a, b in zip(times, times[1:])):
        what = "x" if budgets is None else "budgets"
        raise ValueError(f"points must be sorted strictly ascending in {what}")
    steps = []
    for k in range(min_train, len(pts)):
        x_eval, y_eval = pts[k]
        try:
            law = fit(pts[:k])
            pred = float(law.predict(x_eval))
            steps.append(CvStep(k, times[k], pred, y_eval, abs(pred - y_eval), law.log_prefactor, law.exponent))
        except (ValueError, ArithmeticError) as exc:
            steps.append(CvStep(k, times[k], math.nan, y_eval, math.nan, math.nan, math.nan, failed=True, error=str(exc)))
    good = [s.rmse for s in steps if not s.failed]
    mean = sum(good) / len(good) if good else math.nan
    return CvReport(regression_name=name, steps=tuple(steps), mean_rmse=mean)


def cv_all(
    named_points: Mapping[str, Sequence[tuple[float, float]]],
    min_train: int = DEFAULT_MIN_TRAIN,
    budgets: Optional[Mapping[str, Sequence[float]]] = None,
) -> list[CvReport]:
    """Run rolling_cv per named regression; a failing input yields an error report."""
    budgets = budgets or {}
    reports = []
    for name, pts in named_points.items():
        try:
            reports.append(rolling_cv(pts, min_train=min_train, name=name, budgets=budgets.get(name)))
        except ValueError as exc:
            reports.append(CvReport(regression_name=name, error=str(exc)))
    return reports


def trajectory_rows(reports: Sequence[CvReport]) -> list[dict]:
    rows = []
    for rep in reports:
        for s in rep.steps:
            rows.append({
                "regression_name": rep.regression_name,
                "train_size": s.train_size,
                "b0": s.b0,
                "b1": s.b1,
                "predicted": s.predicted,
                "actual": s.actual,
                "abs_error": s.rmse,
            })
    return rows


def trajectory_csv(reports: Sequence[CvReport]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=TRAJECTORY_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in trajectory_rows(reports):
        writer.writerow({k: (format(v, ".17g") if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()
