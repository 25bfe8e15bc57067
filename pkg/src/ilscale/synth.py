"""Synthetic scaling data with known ground truth.

Loss is drawn from a quadratic log-surface with lognormal noise; return is
tied to loss by R = prefactor * L**delta times independent lognormal noise.

Random draws use numpy's PCG64 generator seeded with ``spec.seed``
(``numpy.random.default_rng(seed)``). All loss noise is drawn first as one
(budgets x models) block in row-major order, then the return noise block.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .numerics import fit_power_law
from .parametric import COEFF_NAMES, Direction, QuadraticSurface, alpha_beta, optimal_allocation
from .records import ExperimentRecord, Setting

MIN_ABS_DENOM = 1e-6


@dataclass(frozen=True)
class SynthSpec:
    surface: QuadraticSurface
    budgets: tuple[float, ...]
    model_grid: tuple[int, ...]
    return_delta: float = -2.0
    return_prefactor: float = 100.0
    noise_sigma: float = 0.0
    seed: int = 0
    flop_denominator: float = 6.0
    # when set, model_grid is rescaled per budget so its geometric mean sits on the true N_opt
    grid_center: bool = False

    def __post_init__(self):
        object.__setattr__(self, "budgets", tuple(float(b) for b in self.budgets))
        object.__setattr__(self, "model_grid", tuple(int(n) for n in self.model_grid))
        for name in ("budgets", "model_grid"):
            values = getattr(self, name)
            if not values or any(v <= 0 for v in values):
                raise ValueError(f"{name} must be non-empty and strictly positive")
            if any(b <= a for a, b in zip(values, values[1:])):
                raise ValueError(f"{name} must be strictly ascending")
        if not self.noise_sigma >= 0:
            raise ValueError("noise_sigma must be >= 0")
        if not self.flop_denominator > 0:
            raise ValueError("flop_denominator must be positive")
        if abs(self.surface.denom) < MIN_ABS_DENOM:
            raise ValueError(f"surface denominator {self.surface.denom:.3g} too close to zero for an interior optimum")
        # ground truth carries no estimation uncertainty
        if np.any(self.surface.covariance != 0):
            object.__setattr__(self, "surface", QuadraticSurface.from_coeffs(
                self.surface.coeffs, direction=self.surface.direction))

    def with_seed(self, seed: int) -> "SynthSpec":
        return SynthSpec(self.surface, self.budgets, self.model_grid, self.return_delta, self.return_prefactor,
                         self.noise_sigma, seed, self.flop_denominator, self.grid_center)

    def with_noise(self, sigma: float) -> "SynthSpec":
        return SynthSpec(self.surface, self.budgets, self.model_grid, self.return_delta, self.return_prefactor,
                         sigma, self.seed, self.flop_denominator, self.grid_center)

    def to_dict(self) -> dict:
        return {
            "surface": {k: getattr(self.surface, k) for k in COEFF_NAMES},
            "budgets": list(self.budgets),
            "model_grid": list(self.model_grid),
            "return_delta": self.return_delta,
            "return_prefactor": self.return_prefactor,
            "noise_sigma": self.noise_sigma,
            "seed": self.seed,
            "flop_denominator": self.flop_denominator,
            "grid_center": self.grid_center,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        missing = [k for k in ("surface", "budgets", "model_grid", "seed") if k not in d]
        if missing:
            raise KeyError(f"synth spec missing required field(s): {', '.join(missing)}")
        surf = d["surface"]
        missing = [k for k in COEFF_NAMES if k not in surf]
        if missing:
            raise KeyError(f"synth spec surface missing coefficient(s): {', '.join(missing)}")
        if not isinstance(d["seed"], int) or isinstance(d["seed"], bool):
            raise ValueError("seed must be an integer")
        return cls(
            surface=QuadraticSurface(**{k: float(surf[k]) for k in COEFF_NAMES}),
            budgets=d["budgets"],
            model_grid=d["model_grid"],
            return_delta=float(d.get("return_delta", -2.0)),
            return_prefactor=float(d.get("return_prefactor", 100.0)),
            noise_sigma=float(d.get("noise_sigma", 0.0)),
            seed=d["seed"],
            flop_denominator=float(d.get("flop_denominator", 6.0)),
            grid_center=bool(d.get("grid_center", False)),
        )


# The quadratic part is a perfect square (bND = -2 sqrt(bN2 bD2)), so the
# optimal loss is an exact power law in C: alpha ~ 0.523, gamma ~ -0.121,
# optimal loss ~3.0 -> 0.75 over 1e13..1e18 FLOPs, optimum inside the model grid.
DEFAULT_SURFACE = QuadraticSurface(
    b0=4.66, bN=-0.08, bD=-0.165, bN2=0.0025, bND=-2.0 * math.sqrt(0.0025 * 0.003), bD2=0.003)


def default_spec(noise_sigma: float = 0.01, seed: int = 0) -> SynthSpec:
    """6 budgets (1e13..1e18) x 9 model sizes (1e4..1e8), lognormal noise sigma."""
    return SynthSpec(
        surface=DEFAULT_SURFACE,
        budgets=tuple(10.0**e for e in range(13, 19)),
        model_grid=tuple(int(round(10 ** (4 + 0.5 * i))) for i in range(9)),
        return_delta=-2.0,
        return_prefactor=100.0,
        noise_sigma=noise_sigma,
        seed=seed,
        flop_denominator=6.0,
    )


def model_sizes(spec: SynthSpec, budget: float) -> tuple[int, ...]:
    """Model sizes sampled at one budget."""
    if not spec.grid_center:
        return spec.model_grid
    n_opt, _ = optimal_allocation(spec.surface, budget, spec.flop_denominator)
    log_mid = float(np.mean(np.log(spec.model_grid)))
    return tuple(max(1, int(round(n_opt * math.exp(math.log(n) - log_mid)))) for n in spec.model_grid)


def generate(spec: SynthSpec) -> list[ExperimentRecord]:
    rng = np.random.default_rng(spec.seed)
    shape = (len(spec.budgets), len(spec.model_grid))
    loss_noise = rng.normal(0.0, spec.noise_sigma, size=shape) if spec.noise_sigma > 0 else np.zeros(shape)
    return_noise = rng.normal(0.0, spec.noise_sigma, size=shape) if spec.noise_sigma > 0 else np.zeros(shape)
    records = []
    for i, budget in enumerate(spec.budgets):
        for j, n in enumerate(model_sizes(spec, budget)):
            d = budget / (spec.flop_denominator * n)
            log_loss = float(spec.surface.log_metric(math.log(n), math.log(d))) + loss_noise[i, j]
            loss = math.exp(log_loss)
            mean_return = spec.return_prefactor * math.exp(spec.return_delta * log_loss + return_noise[i, j])
            records.append(ExperimentRecord(
                domain="synthetic",
                setting=Setting.BC_LOSS,
                flops=budget,
                params=n,
                samples=d,
                loss=loss,
                mean_return=mean_return,
                seed=spec.seed,
                meta={"budget_index": str(i), "model_index": str(j)},
            ))
    return records


@dataclass(frozen=True)
class SynthTruth:
    alpha: float
    beta: float
    G: float
    gamma_loss: float
    gamma_return: float
    delta: float
    budgets: tuple[float, ...]
    n_opt: tuple[float, ...]
    d_opt: tuple[float, ...]
    loss_opt: tuple[float, ...]
    return_opt: tuple[float, ...]
    flop_denominator: float = 6.0
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha, "beta": self.beta, "G": self.G,
            "gamma_loss": self.gamma_loss, "gamma_return": self.gamma_return, "delta": self.delta,
            "flop_denominator": self.flop_denominator,
            "optima": [
                {"budget": c, "n_opt": n, "d_opt": d, "loss_opt": lo, "return_opt": r}
                for c, n, d, lo, r in zip(self.budgets, self.n_opt, self.d_opt, self.loss_opt, self.return_opt)
            ],
        }

    def loss_opt_at(self, budget: float, surface: QuadraticSurface) -> float:
        n, d = optimal_allocation(surface, budget, self.flop_denominator)
        return float(surface.metric(n, d))


def analytic_optima(spec: SynthSpec) -> SynthTruth:
    law = alpha_beta(spec.surface, spec.flop_denominator)
    ns, ds, losses, returns = [], [], [], []
    for c in spec.budgets:
        n, d = optimal_allocation(spec.surface, c, spec.flop_denominator)
        loss = float(spec.surface.metric(n, d))
        ns.append(n)
        ds.append(d)
        losses.append(loss)
        returns.append(spec.return_prefactor * loss**spec.return_delta)
    if len(spec.budgets) >= 2:
        gamma_loss = fit_power_law(list(zip(spec.budgets, losses))).exponent
        gamma_return = fit_power_law(list(zip(spec.budgets, returns))).exponent
    else:
        gamma_loss = gamma_return = math.nan
    return SynthTruth(
        alpha=law.alpha, beta=law.beta, G=law.G,
        gamma_loss=gamma_loss, gamma_return=gamma_return, delta=spec.return_delta,
        budgets=spec.budgets, n_opt=tuple(ns), d_opt=tuple(ds),
        loss_opt=tuple(losses), return_opt=tuple(returns),
        flop_denominator=spec.flop_denominator,
    )


def load_spec(path: str) -> SynthSpec:
    with open(path, encoding="utf-8") as f:
        return SynthSpec.from_dict(json.load(f))
