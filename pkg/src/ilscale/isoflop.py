"""IsoFLOP profile analysis.

Each budget group gets a parabola of the metric against log10(params); its
vertex is that budget's optimum. Optimal params, samples and metric are
then regressed on FLOPs in log-log space.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .flops import FlopRule, samples_for_budget
from .numerics import ParabolaFit, PowerLaw, RegressionError, fit_parabola, fit_power_law
from .records import BudgetGroup, ExperimentRecord

logger = logging.getLogger(__name__)

MIN_LOSS = "min_loss"
MAX_RETURN = "max_return"
OBJECTIVES = (MIN_LOSS, MAX_RETURN)

# vertex may sit at most one decade outside the sampled model sizes
EXTRAPOLATION_FACTOR = 10.0


@dataclass(frozen=True)
class BudgetOptimum:
    budget: float
    n_opt: float
    d_opt: float
    metric_opt: float
    parabola: Optional[ParabolaFit]
    fallback: bool = False

    def to_dict(self) -> dict:
        out = {"budget": self.budget, "n_opt": self.n_opt, "d_opt": self.d_opt, "metric_opt": self.metric_opt,
               "fallback": self.fallback}
        if self.parabola is not None:
            out["parabola"] = {"a": self.parabola.a, "b": self.parabola.b, "c": self.parabola.c}
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "BudgetOptimum":
        par = d.get("parabola")
        return cls(
            budget=float(d["budget"]), n_opt=float(d["n_opt"]), d_opt=float(d["d_opt"]),
            metric_opt=float(d["metric_opt"]),
            parabola=ParabolaFit(**par) if par else None,
            fallback=bool(d.get("fallback", False)),
        )


class NoInteriorOptimum(RegressionError):
    """A budget group has no usable parabola vertex.

    ``fallback`` holds the empirical best record turned into a BudgetOptimum.
    """

    def __init__(self, message: str, fallback: BudgetOptimum):
        super().__init__(message)
        self.fallback = fallback


def _metric_name(objective: str) -> str:
    if objective == MIN_LOSS:
        return "loss"
    if objective == MAX_RETURN:
        return "mean_return"
    raise ValueError(f"unknown objective {objective!r}")


def _group_points(group: BudgetGroup, objective: str) -> list[tuple[ExperimentRecord, float]]:
    name = _metric_name(objective)
    out = []
    for r in group.records:
        value = getattr(r, name)
        if value is None:
            raise ValueError(f"record at params={r.params} lacks {name}")
        out.append((r, value))
    return out


def extract_optimum(group: BudgetGroup, objective: str, rule: FlopRule) -> BudgetOptimum:
    """Parabola-vertex optimum for one budget group.

    Raises NoInteriorOptimum (with the empirical best point attached) when
    the parabola opens the wrong way, is degenerate, is underdetermined, or
    places its vertex more than a decade outside the sampled model sizes.
    """
    points = _group_points(group, objective)
    # sort so the result does not depend on record order
    points.sort(key=lambda rv: (rv[0].params, rv[1]))
    values = np.array([v for _, v in points])
    params = np.array([r.params for r, _ in points], dtype=float)
    best = int(np.argmin(values) if objective == MIN_LOSS else np.argmax(values))
    fallback = BudgetOptimum(
        budget=group.budget,
        n_opt=float(params[best]),
        d_opt=samples_for_budget(rule, group.budget, float(params[best])),
        metric_opt=float(values[best]),
        parabola=None,
        fallback=True,
    )
    u = np.log10(params)
    try:
        parabola = fit_parabola(list(zip(u, values)))
    except RegressionError as exc:
        raise NoInteriorOptimum(f"no interior optimum at budget C={group.budget:.4g}: {exc}", fallback) from None
    wanted_min = objective == MIN_LOSS
    if parabola.is_minimum != wanted_min:
        raise NoInteriorOptimum(
            f"no interior optimum at budget C={group.budget:.4g}: parabola opens the wrong way (a={parabola.a:.3g})",
            fallback,
        )
    n_opt = 10.0 ** parabola.vertex_u
    lo, hi = params.min() / EXTRAPOLATION_FACTOR, params.max() * EXTRAPOLATION_FACTOR
    if not lo <= n_opt <= hi:
        raise NoInteriorOptimum(
            f"no interior optimum at budget C={group.budget:.4g}: vertex N={n_opt:.3g} outside [{lo:.3g}, {hi:.3g}]",
            fallback,
        )
    return BudgetOptimum(
        budget=group.budget,
        n_opt=n_opt,
        d_opt=samples_for_budget(rule, group.budget, n_opt),
        metric_opt=parabola.vertex_y,
        parabola=parabola,
    )


@dataclass(frozen=True)
class IsoflopLaws:
    objective: str
    n_law: PowerLaw
    d_law: PowerLaw
    metric_law: PowerLaw
    optima: tuple[BudgetOptimum, ...]
    warnings: tuple[str, ...] = field(default_factory=tuple)

    @property
    def alpha(self) -> float:
        return self.n_law.exponent

    @property
    def beta(self) -> float:
        return self.d_law.exponent

    @property
    def gamma(self) -> float:
        return self.metric_law.exponent

    @property
    def budget_range(self) -> tuple[float, float]:
        budgets = [o.budget for o in self.optima]
        return min(budgets), max(budgets)

    def to_dict(self) -> dict:
        return {
            "objective": self.objective,
            "alpha": self.alpha,
            "beta": self.beta,
            "gamma": self.gamma,
            "n_law": self.n_law.to_dict(),
            "d_law": self.d_law.to_dict(),
            "metric_law": self.metric_law.to_dict(),
            "optima": [o.to_dict() for o in self.optima],
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "IsoflopLaws":
        return cls(
            objective=d["objective"],
            n_law=PowerLaw.from_dict(d["n_law"]),
            d_law=PowerLaw.from_dict(d["d_law"]),
            metric_law=PowerLaw.from_dict(d["metric_law"]),
            optima=tuple(BudgetOptimum.from_dict(o) for o in d["optima"]),
            warnings=tuple(d.get("warnings", ())),
        )


def collect_optima(
    groups: Sequence[BudgetGroup],
    objective: str,
    rule: FlopRule,
    skip_budgets: int = 0,
    use_fallback: bool = False,
) -> tuple[list[BudgetOptimum], list[str]]:
    """Per-budget optima plus warnings for budgets that were skipped or fell back."""
    optima, warnings = [], []
    groups = sorted(groups, key=lambda g: g.budget)
    for g in groups[:skip_budgets]:
        warnings.append(f"budget C={g.budget:.4g} skipped by request")
    for g in groups[skip_budgets:]:
        try:
            optima.append(extract_optimum(g, objective, rule))
        except NoInteriorOptimum as exc:
            if use_fallback:
                optima.append(exc.fallback)
                warnings.append(f"{exc}; using empirical best point N={exc.fallback.n_opt:.4g}")
            else:
                warnings.append(f"{exc}; budget skipped")
            logger.warning("%s", warnings[-1])
    return optima, warnings


def laws_from_optima(optima: Sequence[BudgetOptimum], objective: str, warnings: Sequence[str] = ()) -> IsoflopLaws:
    if len(optima) < 3:
        raise RegressionError(f"insufficient budgets: {len(optima)} valid optima, need at least 3")
    metric_points = [(o.budget, o.metric_opt) for o in optima]
    if any(y <= 0 for _, y in metric_points):
        raise RegressionError("optimal metric values must be positive for a log-log fit")
    return IsoflopLaws(
        objective=objective,
        n_law=fit_power_law([(o.budget, o.n_opt) for o in optima]),
        d_law=fit_power_law([(o.budget, o.d_opt) for o in optima]),
        metric_law=fit_power_law(metric_points),
        optima=tuple(optima),
        warnings=tuple(warnings),
    )


def approach1_laws(
    groups: Sequence[BudgetGroup],
    objective: str,
    rule: FlopRule,
    skip_budgets: int = 0,
    use_fallback: bool = False,
) -> IsoflopLaws:
    """Fit N_opt, D_opt and metric_opt power laws in C over the budget groups."""
    optima, warnings = collect_optima(groups, objective, rule, skip_budgets, use_fallback)
    return laws_from_optima(optima, objective, warnings)


def metric_floor_check(laws: IsoflopLaws, floor: float, max_budget: float = 1e30) -> list[float]:
    """Budgets at which the fitted metric law reaches `floor`.

    For a loss law this is where predicted loss falls below the floor; for a
    return law, where predicted return rises past the ceiling. Empty when
    the law moves away from the floor or only gets there beyond max_budget.
    """
    law = laws.metric_law
    if not floor > 0 or law.exponent == 0:
        return []
    heading_down = law.exponent < 0
    if heading_down != (laws.objective == MIN_LOSS):
        return []
    log_crossing = (math.log(floor) - law.log_prefactor) / law.exponent
    if log_crossing > math.log(max_budget):
        return []
    return [math.exp(log_crossing)]


def optima_table(optima: Sequence[BudgetOptimum]) -> list[dict]:
    return [{"budget": o.budget, "n_opt": o.n_opt, "d_opt": o.d_opt, "metric_opt": o.metric_opt} for o in optima]
