"""Width x budget sweep producing ExperimentRecords via the snapshot protocol.

Each (width, seed) pair is one training run. Its snapshots sit at
D = C / (6 N) for every nominal budget C, so one run covers a whole row of
the isoFLOP grid.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field

from ..flops import BC_RULE, rule_flops, samples_for_budget
from ..records import ExperimentRecord, Setting
from .policy import UniformPolicy, ExpertPolicy, param_count
from .train import evaluate_return, generate_expert_dataset, train_bc

logger = logging.getLogger(__name__)

DOMAIN = "gridworld"
# held-out data and rollouts use seed streams disjoint from the training set
VALIDATION_SEED_OFFSET = 1_000_003
ROLLOUT_SEED_OFFSET = 2_000_003


@dataclass(frozen=True)
class TrainConfig:
    widths: tuple[int, ...] = (1, 2, 4, 8, 16, 32)
    budgets: tuple[float, ...] = (1e8, 3e8, 1e9, 3e9, 1e10)
    seeds: tuple[int, ...] = (0,)
    lr: float = 3e-3
    batch_size: int = 64
    dataset_episodes: int = 2000
    validation_episodes: int = 100
    rollout_episodes: int = 100
    max_samples: float = 1e7
    data_seed: int = 0
    greedy: bool = True

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        object.__setattr__(self, "budgets", tuple(float(b) for b in self.budgets))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if len(self.widths) < 4:
            raise ValueError(f"need at least 4 widths, got {len(self.widths)}")
        if len(self.budgets) < 4:
            raise ValueError(f"need at least 4 budgets, got {len(self.budgets)}")
        if sorted(set(self.widths)) != list(self.widths) or self.widths[0] < 1:
            raise ValueError("widths must be positive and strictly ascending")
        if sorted(set(self.budgets)) != list(self.budgets) or self.budgets[0] <= 0:
            raise ValueError("budgets must be positive and strictly ascending")
        if not self.seeds:
            raise ValueError("need at least one seed")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config field(s): {', '.join(sorted(unknown))}")
        return cls(**d)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class ExperimentResult:
    records: list[ExperimentRecord]
    expert_score: float
    expert_rollout: float
    random_baseline: float
    random_baseline_se: float
    skipped: list[str] = field(default_factory=list)
    max_policy_return: tuple[float, float] = (math.nan, math.nan)

    def manifest(self, config: TrainConfig) -> dict:
        return {
            "config": config.to_dict(),
            "config_digest": config.digest(),
            "expert_score": self.expert_score,
            "expert_rollout_return": self.expert_rollout,
            "random_baseline": self.random_baseline,
            "random_baseline_se": self.random_baseline_se,
            "seeds": list(config.seeds),
            "n_records": len(self.records),
            "skipped": list(self.skipped),
        }


def run_isoflop_experiment(config: TrainConfig) -> ExperimentResult:
    dataset = generate_expert_dataset(config.dataset_episodes, config.data_seed)
    validation = generate_expert_dataset(config.validation_episodes, config.data_seed + VALIDATION_SEED_OFFSET)
    rollout_seed = config.data_seed + ROLLOUT_SEED_OFFSET
    expert = evaluate_return(ExpertPolicy(), config.rollout_episodes, rollout_seed)
    random = evaluate_return(UniformPolicy(), config.rollout_episodes, rollout_seed, greedy=False)
    logger.info("dataset %d pairs, expert %.3f, random %.3f", len(dataset), expert.mean, random.mean)

    records, skipped = [], []
    best = (-math.inf, 0.0)
    for seed in config.seeds:
        for width in config.widths:
            n = param_count(width)
            cells = []
            for i, budget in enumerate(config.budgets):
                d = samples_for_budget(BC_RULE, budget, n)
                if d > config.max_samples or round(d) < 1:
                    msg = f"width {width} (N={n}) cannot reach budget {budget:.3g}: needs D={d:.3g}"
                    skipped.append(msg)
                    logger.warning("%s", msg)
                    continue
                cells.append((i, budget, d))
            if not cells:
                continue
            snaps = train_bc(dataset, width, max(d for _, _, d in cells), [d for _, _, d in cells], validation,
                             lr=config.lr, batch_size=config.batch_size, seed=seed)
            for (i, budget, d), snap in zip(cells, snaps):
                ret = evaluate_return(snap.policy, config.rollout_episodes, rollout_seed, greedy=config.greedy)
                if ret.mean > best[0]:
                    best = (ret.mean, ret.stderr)
                meta = {"width": str(width), "budget_index": str(i), "nominal_budget": format(budget, ".17g"),
                        "return_se": format(ret.stderr, ".17g")}
                flops = rule_flops(BC_RULE, n, d)
                for setting in (Setting.BC_LOSS, Setting.BC_RETURN):
                    records.append(ExperimentRecord(
                        domain=DOMAIN, setting=setting, flops=flops, params=n, samples=d,
                        loss=snap.validation_loss, mean_return=ret.mean, seed=seed, meta=meta,
                    ))
                logger.info("seed %d width %d C=%.3g: loss %.4f return %.2f", seed, width, budget,
                            snap.validation_loss, ret.mean)
    return ExperimentResult(
        records=records, expert_score=dataset.expert_score, expert_rollout=expert.mean,
        random_baseline=random.mean, random_baseline_se=random.stderr, skipped=skipped, max_policy_return=best,
    )
