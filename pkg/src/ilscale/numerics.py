"""Regression primitives: OLS with coefficient covariance, parabolas, power laws.

All logarithms are natural. Confidence intervals use the normal quantile
z = 1.96 with no small-sample correction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

Z95 = 1.96


class RegressionError(ValueError):
    pass


@dataclass(frozen=True)
class OlsFit:
    coeffs: np.ndarray
    covariance: np.ndarray
    residual_variance: float
    r_squared: float
    n: int

    @property
    def stderr(self) -> np.ndarray:
        return np.sqrt(np.diag(self.covariance))


def ols(design, targets, column_names: Sequence[str] | None = None, allow_exact: bool = False) -> OlsFit:
    """Ordinary least squares via Householder QR.

    The covariance is ``s^2 (X^T X)^{-1}`` with ``s^2 = RSS / (n - p)``.
    Columns are scaled to unit norm before factorisation so the rank test
    does not depend on units. With ``allow_exact`` an n == p system is
    solved exactly and reported with an infinite covariance.
    """
    X = np.asarray(design, dtype=float)
    y = np.asarray(targets, dtype=float)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise RegressionError(f"shape mismatch: design {X.shape}, targets {y.shape}")
    n, p = X.shape
    if n < p or (n == p and not allow_exact):
        raise RegressionError(f"need more observations than coefficients (n={n}, p={p})")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise RegressionError("design and targets must be finite")
    names = list(column_names) if column_names is not None else [f"x{j}" for j in range(p)]

    scale = np.linalg.norm(X, axis=0)
    for j in np.flatnonzero(scale == 0):
        raise RegressionError(f"design is rank deficient: column {names[j]!r} is all zeros")
    Xs = X / scale
    Q, R = np.linalg.qr(Xs, mode="reduced")
    diag = np.abs(np.diag(R))
    # cond up to ~1e8 must still solve; a pivot below 1e-10 means a dependent column
    for j in range(p):
        if diag[j] < 1e-10:
            raise RegressionError(f"design is rank deficient: column {names[j]!r} is linearly dependent on earlier columns")

    qty = Q.T @ y
    coeffs_s = np.linalg.solve(R, qty)
    coeffs = coeffs_s / scale
    resid = y - X @ coeffs
    rss = float(resid @ resid)
    dof = n - p
    Rinv = np.linalg.solve(R, np.eye(p))
    unscaled_cov = (Rinv @ Rinv.T) / np.outer(scale, scale)
    if dof > 0:
        s2 = rss / dof
        cov = s2 * unscaled_cov
    else:
        s2 = math.nan
        cov = np.full((p, p), math.inf)
    cov = 0.5 * (cov + cov.T)

    tss = float(np.sum((y - y.mean()) ** 2))
    if tss > 0:
        r2 = 1.0 - rss / tss
        r2 = min(max(r2, 0.0), 1.0)
    else:
        r2 = 1.0
    return OlsFit(coeffs=coeffs, covariance=cov, residual_variance=s2, r_squared=r2, n=n)


@dataclass(frozen=True)
class ParabolaFit:
    """y = a*u^2 + b*u + c, fitted in u (log10 of model size in isoFLOP use)."""

    a: float
    b: float
    c: float

    @property
    def vertex_u(self) -> float:
        return -self.b / (2.0 * self.a)

    @property
    def vertex_y(self) -> float:
        return self.c - self.b**2 / (4.0 * self.a)

    @property
    def is_minimum(self) -> bool:
        return self.a > 0

    @property
    def orientation(self) -> str:
        return "min" if self.a > 0 else "max"

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        return self.a * u**2 + self.b * u + self.c


def fit_parabola(points: Sequence[tuple[float, float]]) -> ParabolaFit:
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    u, y = pts[:, 0], pts[:, 1]
    if len(np.unique(u)) < 3:
        raise RegressionError("parabola underdetermined: need at least 3 distinct u values")
    # Centre u for conditioning, then map the coefficients back.
    shift = float(u.mean())
    span = float(np.ptp(u))
    t = (u - shift) / span
    design = np.column_stack([np.ones_like(t), t, t**2])
    fit = ols(design, y, column_names=["1", "u", "u^2"], allow_exact=True)
    c_t, b_t, a_t = fit.coeffs
    a = a_t / span**2
    b = b_t / span - 2.0 * a * shift
    c = c_t - b_t * shift / span + a * shift**2
    y_scale = max(float(np.max(np.abs(y))), float(np.ptp(y)), np.finfo(float).tiny)
    if abs(a_t) < 1e-12 * y_scale:
        raise RegressionError("degenerate parabola: quadratic coefficient is numerically zero")
    return ParabolaFit(a=float(a), b=float(b), c=float(c))


@dataclass(frozen=True)
class PowerLaw:
    """y = exp(log_prefactor) * x**exponent."""

    exponent: float
    log_prefactor: float
    exponent_ci95: tuple[float, float]
    r_squared: float
    n: int
    exponent_se: float = 0.0

    def predict(self, x):
        x = np.asarray(x, dtype=float)
        out = np.exp(self.log_prefactor + self.exponent * np.log(x))
        return float(out) if out.ndim == 0 else out

    def invert(self, y: float) -> float:
        """The x at which the law reaches y."""
        # exponents at rounding level (flat data) count as zero
        if abs(self.exponent) < 1e-12:
            raise RegressionError("power law with zero exponent is not invertible")
        if not y > 0:
            raise RegressionError(f"cannot invert a power law at nonpositive value {y!r}")
        log_x = (math.log(y) - self.log_prefactor) / self.exponent
        if log_x > 709:
            raise RegressionError(f"inverting the power law at {y!r} overflows (log x = {log_x:.4g})")
        return math.exp(log_x)

    def to_dict(self) -> dict:
        return {
            "exponent": self.exponent,
            "log_prefactor": self.log_prefactor,
            "exponent_ci95": list(self.exponent_ci95),
            "exponent_se": self.exponent_se,
            "r_squared": self.r_squared,
            "n": self.n,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PowerLaw":
        return cls(
            exponent=float(d["exponent"]),
            log_prefactor=float(d["log_prefactor"]),
            exponent_ci95=tuple(d.get("exponent_ci95", (math.nan, math.nan))),
            r_squared=float(d.get("r_squared", math.nan)),
            n=int(d.get("n", 0)),
            exponent_se=float(d.get("exponent_se", math.nan)),
        )


def fit_power_law(points: Sequence[tuple[float, float]]) -> PowerLaw:
    """Fit y = exp(b0) * x^b1 by OLS of ln y on (1, ln x)."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    bad = [i for i, (x, y) in enumerate(pts) if not (x > 0 and y > 0)]
    if bad:
        raise RegressionError(f"power-law fit needs strictly positive coordinates; offending indices {bad}")
    lx, ly = np.log(pts[:, 0]), np.log(pts[:, 1])
    design = np.column_stack([np.ones_like(lx), lx])
    fit = ols(design, ly, column_names=["1", "log x"], allow_exact=len(pts) == 2)
    b0, b1 = (float(v) for v in fit.coeffs)
    if fit.n > 2:
        se = math.sqrt(max(float(fit.covariance[1, 1]), 0.0))
        ci = (b1 - Z95 * se, b1 + Z95 * se)
    else:
        # two points determine the line exactly; no residual variance to work from
        se = math.inf
        ci = (-math.inf, math.inf)
    return PowerLaw(exponent=b1, log_prefactor=b0, exponent_ci95=ci, r_squared=fit.r_squared, n=fit.n, exponent_se=se)
