"""Parametric fit of a quadratic log-metric surface and its optimal allocation.

The surface is

    ln L(N, D) = b0 + bN ln N + bD ln D + bN2 (ln N)^2 + bND ln N ln D + bD2 (ln D)^2

Along the constraint k*N*D = C (k = 6 for BC, 8 for RL) it reduces to a
one-dimensional quadratic whose stationary point gives

    N_opt = G (C/k)^alpha,   D_opt = G^-1 (C/k)^beta,
    alpha = (2 bD2 - bND) / den,   beta = (2 bN2 - bND) / den,
    G = exp((bD - bN) / den),      den = 2 bD2 - 2 bND + 2 bN2.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .numerics import Z95, RegressionError, ols
from .records import ExperimentRecord

logger = logging.getLogger(__name__)

COEFF_NAMES = ("b0", "bN", "bD", "bN2", "bND", "bD2")
MIN_RECORDS = 7


class Direction(str, enum.Enum):
    MINIMIZE = "minimize"
    MAXIMIZE = "maximize"


class NoInteriorAllocation(RegressionError):
    pass


@dataclass(frozen=True)
class QuadraticSurface:
    b0: float
    bN: float
    bD: float
    bN2: float
    bND: float
    bD2: float
    covariance: np.ndarray = field(default_factory=lambda: np.zeros((6, 6)), compare=False)
    direction: Direction = Direction.MINIMIZE
    n: int = 0
    warnings: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "direction", Direction(self.direction))
        object.__setattr__(self, "covariance", np.asarray(self.covariance, dtype=float).reshape(6, 6))

    @property
    def coeffs(self) -> np.ndarray:
        return np.array([self.b0, self.bN, self.bD, self.bN2, self.bND, self.bD2])

    @property
    def denom(self) -> float:
        return 2 * self.bD2 - 2 * self.bND + 2 * self.bN2

    def log_metric(self, log_n, log_d):
        u = np.asarray(log_n, dtype=float)
        v = np.asarray(log_d, dtype=float)
        return (self.b0 + self.bN * u + self.bD * v
                + self.bN2 * u**2 + self.bND * u * v + self.bD2 * v**2)

    def metric(self, n, d):
        return np.exp(self.log_metric(np.log(n), np.log(d)))

    @classmethod
    def from_coeffs(cls, coeffs, **kwargs) -> "QuadraticSurface":
        return cls(*(float(c) for c in coeffs), **kwargs)

    def flipped(self) -> "QuadraticSurface":
        """Same optimum, opposite direction: negate every coefficient but b0."""
        c = -self.coeffs
        c[0] = self.b0
        other = Direction.MAXIMIZE if self.direction is Direction.MINIMIZE else Direction.MINIMIZE
        return QuadraticSurface.from_coeffs(c, covariance=self.covariance, direction=other, n=self.n)

    def to_dict(self) -> dict:
        return {
            **{k: getattr(self, k) for k in COEFF_NAMES},
            "covariance": self.covariance.tolist(),
            "direction": self.direction.value,
            "n": self.n,
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "QuadraticSurface":
        return cls(
            **{k: float(d[k]) for k in COEFF_NAMES},
            covariance=np.asarray(d.get("covariance", np.zeros((6, 6))), dtype=float),
            direction=d.get("direction", "minimize"),
            n=int(d.get("n", 0)),
            warnings=tuple(d.get("warnings", ())),
        )


def surface_design(log_n, log_d) -> np.ndarray:
    u = np.asarray(log_n, dtype=float)
    v = np.asarray(log_d, dtype=float)
    return np.column_stack([np.ones_like(u), u, v, u**2, u * v, v**2])


def fit_surface(records: Sequence[ExperimentRecord], metric: str = "loss") -> QuadraticSurface:
    """OLS fit of ln(metric) on the six quadratic terms in (ln N, ln D).

    Records whose metric is missing or nonpositive are dropped with a warning.
    """
    if metric not in ("loss", "return"):
        raise ValueError(f"unknown metric {metric!r}")
    direction = Direction.MINIMIZE if metric == "loss" else Direction.MAXIMIZE
    warnings = []
    rows = []
    for r in records:
        value = r.metric(metric)
        if value is None or not value > 0:
            warnings.append(f"record params={r.params} samples={r.samples:.4g} excluded: {metric}={value!r} not positive")
            continue
        rows.append((r.params, r.samples, value))
    for w in warnings:
        logger.warning("%s", w)
    if len(rows) < MIN_RECORDS:
        raise RegressionError(f"surface fit needs at least {MIN_RECORDS} usable records, got {len(rows)}")
    arr = np.array(rows, dtype=float)
    log_n, log_d, log_y = np.log(arr[:, 0]), np.log(arr[:, 1]), np.log(arr[:, 2])
    if len(np.unique(arr[:, 0])) < 3 or len(np.unique(arr[:, 1])) < 3:
        raise RegressionError("surface fit needs at least 3 distinct N and 3 distinct D values")
    fit = ols(surface_design(log_n, log_d), log_y, column_names=("1", "ln N", "ln D", "ln^2 N", "ln N ln D", "ln^2 D"))
    return QuadraticSurface.from_coeffs(
        fit.coeffs, covariance=fit.covariance, direction=direction, n=fit.n, warnings=tuple(warnings)
    )


@dataclass(frozen=True)
class AllocationLaw:
    alpha: float
    beta: float
    G: float
    flop_denominator: float = 6.0
    alpha_ci95: Optional[tuple[float, float]] = None
    beta_ci95: Optional[tuple[float, float]] = None

    def allocate(self, budget: float) -> tuple[float, float]:
        base = budget / self.flop_denominator
        return self.G * base**self.alpha, base**self.beta / self.G

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "beta": self.beta,
            "G": self.G,
            "flop_denominator": self.flop_denominator,
            "alpha_ci95": None if self.alpha_ci95 is None else list(self.alpha_ci95),
            "beta_ci95": None if self.beta_ci95 is None else list(self.beta_ci95),
        }


def _check_interior(surface: QuadraticSurface) -> float:
    den = surface.denom
    ok = den > 0 if surface.direction is Direction.MINIMIZE else den < 0
    if den == 0 or not ok or not math.isfinite(den):
        raise NoInteriorAllocation(
            f"surface admits no interior optimum along constraint (denominator {den:.3g}, direction {surface.direction.value})"
        )
    return den


def alpha_beta(surface: QuadraticSurface, flop_denominator: float = 6.0) -> AllocationLaw:
    den = _check_interior(surface)
    alpha = (2 * surface.bD2 - surface.bND) / den
    # beta from the complement keeps alpha + beta == 1 bit-exact
    beta = 1.0 - alpha
    G = math.exp((surface.bD - surface.bN) / den)
    return AllocationLaw(alpha=alpha, beta=beta, G=G, flop_denominator=flop_denominator)


def optimal_allocation(surface: QuadraticSurface, budget: float, flop_denominator: float = 6.0) -> tuple[float, float]:
    """Closed-form compute-optimal (N, D) with flop_denominator*N*D == budget."""
    if not budget > 0:
        raise ValueError(f"budget must be positive, got {budget!r}")
    law = alpha_beta(surface, flop_denominator)
    n_opt = law.G * (budget / flop_denominator) ** law.alpha
    # D from the constraint so the product is exact up to rounding
    d_opt = budget / (flop_denominator * n_opt)
    return n_opt, d_opt


@dataclass(frozen=True)
class SearchResult:
    n: float
    d: float
    at_boundary: bool


def constrained_search(
    surface: QuadraticSurface,
    budget: float,
    flop_denominator: float = 6.0,
    grid: int = 2001,
    log_n_range: Optional[tuple[float, float]] = None,
    tol: float = 1e-6,
) -> SearchResult:
    """Brute-force optimum of the surface along flop_denominator*N*D = budget.

    Scans u = ln N on a uniform grid (±10 around the closed-form answer when
    it exists, else `log_n_range` or ±10 around the even split), then
    refines the best cell with a bounded scalar minimizer to `tol`. Independent of
    the closed form except for choosing where to look.
    """
    if grid < 1000:
        raise ValueError("grid must be at least 1000")
    s = math.log(budget / flop_denominator)
    if log_n_range is None:
        try:
            n_star, _ = optimal_allocation(surface, budget, flop_denominator)
            centre = math.log(n_star)
        except NoInteriorAllocation:
            centre = s / 2
        log_n_range = (centre - 10.0, centre + 10.0)
    sign = 1.0 if surface.direction is Direction.MINIMIZE else -1.0

    def objective(u):
        return sign * surface.log_metric(u, s - u)

    us = np.linspace(log_n_range[0], log_n_range[1], grid)
    values = objective(us)
    k = int(np.argmin(values))
    at_boundary = k == 0 or k == grid - 1
    if at_boundary:
        u_best = float(us[k])
    else:
        res = minimize_scalar(lambda u: float(objective(u)), bounds=(float(us[k - 1]), float(us[k + 1])),
                              method="bounded", options={"xatol": tol})
        u_best = float(res.x)
    n = math.exp(u_best)
    return SearchResult(n=n, d=budget / (flop_denominator * n), at_boundary=at_boundary)


def alpha_gradient(surface: QuadraticSurface) -> np.ndarray:
    """Gradient of alpha with respect to (b0, bN, bD, bN2, bND, bD2)."""
    den = surface.denom
    num = 2 * surface.bD2 - surface.bND
    d_bN2 = -2 * num / den**2
    d_bND = (-den + 2 * num) / den**2
    d_bD2 = (2 * den - 2 * num) / den**2
    return np.array([0.0, 0.0, 0.0, d_bN2, d_bND, d_bD2])


def delta_ci(surface: QuadraticSurface, which: str = "alpha") -> tuple[float, float]:
    """95% delta-method interval for alpha or beta.

    The OLS coefficient covariance stands in for Sigma/n.
    """
    law = alpha_beta(surface)
    grad = alpha_gradient(surface)
    if which == "alpha":
        point = law.alpha
    elif which == "beta":
        point, grad = law.beta, -grad
    else:
        raise ValueError(f"which must be 'alpha' or 'beta', got {which!r}")
    cov = surface.covariance
    if not np.all(np.isfinite(cov)):
        raise RegressionError("surface covariance is not finite")
    var = float(grad @ cov @ grad)
    if var < 0:
        raise RegressionError("surface covariance is not positive semidefinite")
    se = math.sqrt(var)
    return point - Z95 * se, point + Z95 * se


def allocation_with_ci(surface: QuadraticSurface, flop_denominator: float = 6.0) -> AllocationLaw:
    law = alpha_beta(surface, flop_denominator)
    return replace(law, alpha_ci95=delta_ci(surface, "alpha"), beta_ci95=delta_ci(surface, "beta"))
