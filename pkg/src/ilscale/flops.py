"""FLOP and effective-parameter accounting.

Only the scaled parts of a network are counted, in both the parameter
count N and the FLOP total C. Training is taken to cost three forward
passes (backward = 2x forward).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional, Sequence

TRAIN_TO_FORWARD = 3.0


class RuleKind(str, enum.Enum):
    LINEAR_BC = "linear_bc"
    LINEAR_RL = "linear_rl"
    CONV_STACK = "conv_stack"


# C = denominator * N * D for the linear rules. The RL rule counts the
# learner forward pass twice because every actor step runs one too.
_LINEAR_DENOMINATORS = {RuleKind.LINEAR_BC: 6.0, RuleKind.LINEAR_RL: 8.0}


@dataclass(frozen=True)
class ConvLayerSpec:
    h_out: int
    w_out: int
    c_out: int
    c_in: int
    k: int

    def __post_init__(self):
        for name in ("h_out", "w_out", "c_out", "c_in", "k"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")


@dataclass(frozen=True)
class FlopRule:
    kind: RuleKind
    layer_specs: Optional[tuple[ConvLayerSpec, ...]] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", RuleKind(self.kind))
        if self.layer_specs is not None:
            object.__setattr__(self, "layer_specs", tuple(self.layer_specs))

    @property
    def is_linear(self) -> bool:
        return self.kind in _LINEAR_DENOMINATORS

    @property
    def denominator(self) -> float:
        """The constant k in C = k*N*D. Only defined for linear rules."""
        if not self.is_linear:
            raise ValueError(f"{self.kind.value} has no linear FLOP denominator")
        return _LINEAR_DENOMINATORS[self.kind]

    @classmethod
    def from_name(cls, name: str) -> "FlopRule":
        aliases = {"6nd": RuleKind.LINEAR_BC, "8nd": RuleKind.LINEAR_RL}
        key = name.lower()
        if key in aliases:
            return cls(aliases[key])
        return cls(RuleKind(key))


BC_RULE = FlopRule(RuleKind.LINEAR_BC)
RL_RULE = FlopRule(RuleKind.LINEAR_RL)


def conv_forward_flops(spec: ConvLayerSpec) -> int:
    """Forward FLOPs of one convolution, bias excluded: 2*h_out*w_out*c_out*k^2*c_in."""
    filter_params = spec.k**2 * spec.c_in
    return 2 * spec.h_out * spec.w_out * spec.c_out * filter_params


def conv_stack_train_flops_per_sample(specs: Sequence[ConvLayerSpec]) -> float:
    return TRAIN_TO_FORWARD * sum(conv_forward_flops(s) for s in specs)


def _check_counts(params: float, samples: float) -> None:
    if not params >= 1:
        raise ValueError(f"params must be >= 1, got {params!r}")
    if not samples > 0:
        raise ValueError(f"samples must be > 0, got {samples!r}")


def rule_flops(rule: FlopRule, params: float, samples: float) -> float:
    """Total training FLOPs for N params trained on D samples under `rule`."""
    _check_counts(params, samples)
    if rule.is_linear:
        return rule.denominator * params * samples
    if not rule.layer_specs:
        raise ValueError("conv_stack rule requires layer_specs")
    return conv_stack_train_flops_per_sample(rule.layer_specs) * samples


def samples_for_budget(rule: FlopRule, budget: float, params: float) -> float:
    """Invert a linear rule: the D with rule_flops(rule, N, D) == C."""
    if not rule.is_linear:
        raise ValueError(f"{rule.kind.value} rule is not invertible in closed form")
    if not budget > 0:
        raise ValueError(f"budget must be > 0, got {budget!r}")
    if not params > 0:
        raise ValueError(f"params must be > 0, got {params!r}")
    return budget / (rule.denominator * params)
