"""Compute forecasts from fitted laws.

Two routes, reported side by side when both fits exist:

* isoFLOP chain: target return -> loss (return-loss law) -> FLOPs (loss law)
  -> (N, D) from the optimal-params and optimal-samples laws.
* parametric: a budget fed through the closed-form allocation of a fitted
  quadratic surface.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .isoflop import MAX_RETURN, MIN_LOSS, BudgetOptimum, IsoflopLaws
from .numerics import PowerLaw, RegressionError, fit_power_law
from .parametric import QuadraticSurface, alpha_beta, optimal_allocation

logger = logging.getLogger(__name__)

ISOFLOP_CHAIN = "isoflop_chain"
ISOFLOP_RETURN = "isoflop_return"
ISOFLOP_LOSS = "isoflop_loss"
PARAMETRIC = "parametric"

BUDGET_MATCH_REL_TOL = 1e-3
# forecasts further than this beyond the fitted budgets get an explicit caveat
FAR_EXTRAPOLATION_DECADES = 1.0


@dataclass(frozen=True)
class ReturnLossLaw:
    """R_opt = exp(log_prefactor) * L_opt**delta."""

    delta: float
    log_prefactor: float
    r_squared: float
    n: int
    warnings: tuple[str, ...] = ()

    def predict_return(self, loss: float) -> float:
        return math.exp(self.log_prefactor + self.delta * math.log(loss))

    def loss_for_return(self, target_return: float) -> float:
        if abs(self.delta) < 1e-12:
            raise RegressionError("return-loss law has zero exponent; cannot invert")
        if not target_return > 0:
            raise ValueError(f"target return must be positive, got {target_return!r}")
        return math.exp((math.log(target_return) - self.log_prefactor) / self.delta)

    def to_dict(self) -> dict:
        return {"delta": self.delta, "log_prefactor": self.log_prefactor, "r_squared": self.r_squared,
                "n": self.n, "warnings": list(self.warnings)}

    @classmethod
    def from_dict(cls, d: dict) -> "ReturnLossLaw":
        return cls(delta=float(d["delta"]), log_prefactor=float(d["log_prefactor"]),
                   r_squared=float(d.get("r_squared", math.nan)), n=int(d.get("n", 0)),
                   warnings=tuple(d.get("warnings", ())))


@dataclass(frozen=True)
class Forecast:
    method: str
    target_metric: float
    budget_C: float
    n_opt: float
    d_opt: float
    implied_loss: Optional[float] = None
    extrapolation_decades: float = 0.0
    warnings: tuple[str, ...] = ()
    provenance: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "target": self.target_metric,
            "implied_loss": self.implied_loss,
            "flops": self.budget_C,
            "params": self.n_opt,
            "samples": self.d_opt,
            "extrapolation_decades": self.extrapolation_decades,
            "warnings": list(self.warnings),
            "provenance": self.provenance,
        }


def match_budgets(a: Sequence[BudgetOptimum], b: Sequence[BudgetOptimum],
                  rel_tol: float = BUDGET_MATCH_REL_TOL) -> list[tuple[BudgetOptimum, BudgetOptimum]]:
    pairs = []
    for oa in a:
        for ob in b:
            if abs(oa.budget - ob.budget) <= rel_tol * max(oa.budget, ob.budget):
                pairs.append((oa, ob))
                break
    return pairs


def fit_return_loss(optima_loss: Sequence[BudgetOptimum], optima_return: Sequence[BudgetOptimum]) -> ReturnLossLaw:
    """Regress log optimal return on log optimal loss over budgets present in both lists."""
    pairs = match_budgets(optima_loss, optima_return)
    if len(pairs) < 3:
        raise RegressionError(f"need at least 3 common budgets for the return-loss law, got {len(pairs)}")
    law = fit_power_law([(lo.metric_opt, ro.metric_opt) for lo, ro in pairs])
    warnings = ()
    if law.exponent >= 0:
        warnings = (f"return-loss exponent {law.exponent:.3g} is not negative: return does not improve as loss falls",)
        logger.warning("%s", warnings[0])
    return ReturnLossLaw(delta=law.exponent, log_prefactor=law.log_prefactor, r_squared=law.r_squared,
                         n=law.n, warnings=warnings)


def extrapolation_note(budget: float, fitted: tuple[float, float]) -> tuple[float, list[str]]:
    """Signed decades outside the fitted budget range (0 inside) and warnings."""
    lo, hi = fitted
    warnings = []
    if budget > hi * (1 + 1e-9):
        decades = math.log10(budget / hi)
        warnings.append(f"extrapolating {decades:.2f} decades beyond the largest fitted budget {hi:.3g}")
        if decades > FAR_EXTRAPOLATION_DECADES:
            warnings.append("forecast more than one decade beyond fitted range; expect substantial model/data size error")
        return decades, warnings
    if budget < lo * (1 - 1e-9):
        decades = math.log10(budget / lo)
        warnings.append(f"budget {budget:.3g} lies {-decades:.2f} decades below the smallest fitted budget {lo:.3g}")
        return decades, warnings
    return 0.0, warnings


def _invert_budget(law: PowerLaw, target: float, what: str) -> float:
    if abs(law.exponent) < 1e-12:
        raise RegressionError(f"{what} law has zero exponent; cannot solve for FLOPs")
    return law.invert(target)


def forecast_from_loss(target_loss: float, laws: IsoflopLaws, implied_from_return: Optional[float] = None,
                       method: str = ISOFLOP_LOSS) -> Forecast:
    if laws.objective != MIN_LOSS:
        raise ValueError("loss forecast needs isoFLOP laws fitted on loss")
    budget = _invert_budget(laws.metric_law, target_loss, "loss")
    decades, warnings = extrapolation_note(budget, laws.budget_range)
    return Forecast(
        method=method,
        target_metric=implied_from_return if implied_from_return is not None else target_loss,
        implied_loss=target_loss,
        budget_C=budget,
        n_opt=laws.n_law.predict(budget),
        d_opt=laws.d_law.predict(budget),
        extrapolation_decades=decades,
        warnings=tuple(warnings),
        provenance={"alpha": laws.alpha, "beta": laws.beta, "gamma": laws.gamma},
    )


def forecast_isoflop_chain(target_return: float, rl_law: ReturnLossLaw, laws: IsoflopLaws) -> Forecast:
    """Return target -> implied loss -> FLOPs -> loss-optimal (N, D)."""
    if not target_return > 0:
        raise ValueError(f"target return must be positive, got {target_return!r}")
    loss = rl_law.loss_for_return(target_return)
    fc = forecast_from_loss(loss, laws, implied_from_return=target_return, method=ISOFLOP_CHAIN)
    prov = dict(fc.provenance, delta=rl_law.delta)
    return Forecast(**{**fc.__dict__, "provenance": prov, "warnings": fc.warnings + rl_law.warnings})


def forecast_from_return_law(target_return: float, laws: IsoflopLaws) -> Forecast:
    """Invert the return-vs-FLOPs law, then read (N, D) off the return-optimal laws."""
    if laws.objective != MAX_RETURN:
        raise ValueError("return forecast needs isoFLOP laws fitted on return")
    if not laws.metric_law.exponent > 0:
        raise RegressionError(f"return law not increasing (exponent {laws.metric_law.exponent:.3g})")
    if not target_return > 0:
        raise ValueError(f"target return must be positive, got {target_return!r}")
    budget = laws.metric_law.invert(target_return)
    decades, warnings = extrapolation_note(budget, laws.budget_range)
    return Forecast(
        method=ISOFLOP_RETURN,
        target_metric=target_return,
        budget_C=budget,
        n_opt=laws.n_law.predict(budget),
        d_opt=laws.d_law.predict(budget),
        extrapolation_decades=decades,
        warnings=tuple(warnings),
        provenance={"alpha": laws.alpha, "beta": laws.beta, "gamma": laws.gamma},
    )


def forecast_parametric(budget: float, surface: QuadraticSurface, flop_denominator: float = 6.0,
                        fitted_range: Optional[tuple[float, float]] = None) -> Forecast:
    law = alpha_beta(surface, flop_denominator)
    n_opt, d_opt = optimal_allocation(surface, budget, flop_denominator)
    decades, warnings = (0.0, [])
    if fitted_range is not None:
        decades, warnings = extrapolation_note(budget, fitted_range)
    return Forecast(
        method=PARAMETRIC,
        target_metric=float(surface.metric(n_opt, d_opt)),
        budget_C=budget,
        n_opt=n_opt,
        d_opt=d_opt,
        extrapolation_decades=decades,
        warnings=tuple(warnings),
        provenance={"alpha": law.alpha, "beta": law.beta, "G": law.G, "flop_denominator": flop_denominator,
                    "direction": surface.direction.value},
    )


def format_count(x: float) -> str:
    """Human-readable count: 43e6 -> '43M', 1.44e11 -> '144B', 13.2e12 -> '13.2T'."""
    for scale, suffix in ((1e12, "T"), (1e9, "B"), (1e6, "M"), (1e3, "k")):
        if abs(x) >= scale:
            return f"{x / scale:.3g}{suffix}"
    return f"{x:.3g}"
