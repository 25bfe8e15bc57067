"""Expert data, behavioral-cloning training with snapshots, and rollouts."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .env import STEP_LIMIT, GridWorld, episode_rng, expert_action
from .policy import N_ACTIONS, BcPolicy

logger = logging.getLogger(__name__)

DIVERGENCE_LOSS = 10 * math.log(N_ACTIONS)
DIVERGENCE_PATIENCE = 3


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class Dataset:
    obs: np.ndarray
    actions: np.ndarray
    episode: np.ndarray
    returns: np.ndarray

    def __len__(self):
        return len(self.actions)

    @property
    def expert_score(self) -> float:
        return float(self.returns.mean())


def generate_expert_dataset(episodes: int, seed: int) -> Dataset:
    """Roll out the scripted expert; episode i uses rng seeded with [seed, i]."""
    if episodes < 1:
        raise ValueError("episodes must be at least 1")
    obs, actions, ep_ids, returns = [], [], [], []
    for i in range(episodes):
        env = GridWorld(episode_rng(seed, i))
        while not env.done:
            a = expert_action(env.agent, env.pellets)
            obs.append(env.observation())
            actions.append(a)
            ep_ids.append(i)
            env.step(a)
        returns.append(env.total_return)
    return Dataset(
        obs=np.array(obs),
        actions=np.array(actions, dtype=np.int64),
        episode=np.array(ep_ids, dtype=np.int64),
        returns=np.array(returns),
    )


def validation_loss(policy, data: Dataset) -> float:
    return policy.loss(data.obs, data.actions)


@dataclass(frozen=True)
class Snapshot:
    samples: float
    validation_loss: float
    policy: BcPolicy


class _Adam:
    def __init__(self, params: dict, lr: float, b1: float = 0.9, b2: float = 0.999, eps: float = 1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        c1 = 1 - self.b1**self.t
        c2 = 1 - self.b2**self.t
        for k, g in grads.items():
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
            params[k] -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


def train_bc(
    dataset: Dataset,
    width: int,
    sample_budget: float,
    snapshots: Sequence[float],
    validation: Dataset,
    lr: float = 3e-3,
    batch_size: int = 64,
    seed: int = 0,
) -> list[Snapshot]:
    """Minibatch Adam on the cross-entropy of expert actions.

    Samples are drawn by reshuffling the dataset every epoch. A snapshot at
    D records the validation loss after exactly round(D) training samples
    (the last minibatch before a snapshot is shortened to land on it).
    """
    snaps = [float(s) for s in snapshots]
    if any(b < a for a, b in zip(snaps, snaps[1:])):
        raise ValueError("snapshots must be ascending")
    if snaps and snaps[-1] > sample_budget:
        raise ValueError("last snapshot exceeds the sample budget")
    rng = np.random.default_rng([seed, width])
    policy = BcPolicy(width, rng)
    opt = _Adam(policy.params, lr)
    n = len(dataset)
    order = rng.permutation(n)
    cursor = 0
    seen = 0
    out = []
    bad_evals = 0
    targets = [int(round(s)) for s in snaps]
    for snap_d, target in zip(snaps, targets):
        while seen < target:
            m = min(batch_size, target - seen)
            if cursor + m > n:
                order = rng.permutation(n)
                cursor = 0
            idx = order[cursor:cursor + m]
            cursor += m
            _, grads = policy.loss_and_grads(dataset.obs[idx], dataset.actions[idx])
            opt.step(policy.params, grads)
            seen += m
        vloss = validation_loss(policy, validation)
        if not math.isfinite(vloss) or vloss > DIVERGENCE_LOSS:
            bad_evals += 1
            if bad_evals >= DIVERGENCE_PATIENCE:
                raise TrainingDiverged(
                    f"width {width}: validation loss {vloss:.4g} above {DIVERGENCE_LOSS:.3g} for "
                    f"{DIVERGENCE_PATIENCE} consecutive evaluations (at {seen} samples, lr={lr})"
                )
        else:
            bad_evals = 0
        out.append(Snapshot(samples=snap_d, validation_loss=vloss, policy=policy.copy()))
    return out


@dataclass(frozen=True)
class ReturnEstimate:
    mean: float
    stderr: float
    returns: np.ndarray


def evaluate_return(policy, episodes: int = 100, seed: int = 0, greedy: bool = True) -> ReturnEstimate:
    """Mean return over a fixed, seeded episode set, all episodes stepped in lockstep.

    Greedy selection takes the argmax (lowest index on ties); otherwise
    actions are sampled from rng seeded with [seed, episodes, 1].
    """
    envs = [GridWorld(episode_rng(seed, i)) for i in range(episodes)]
    sampler = np.random.default_rng([seed, episodes, 1])
    for _ in range(STEP_LIMIT):
        live = [e for e in envs if not e.done]
        if not live:
            break
        probs = policy.probs(np.stack([e.observation() for e in live]))
        if greedy:
            acts = np.argmax(probs, axis=1)
        else:
            u = sampler.random(len(live))
            acts = np.minimum((probs.cumsum(axis=1) < u[:, None]).sum(axis=1), N_ACTIONS - 1)
        for env, a in zip(live, acts):
            env.step(int(a))
    returns = np.array([e.total_return for e in envs])
    se = float(returns.std(ddof=1) / math.sqrt(len(returns))) if len(returns) > 1 else 0.0
    return ReturnEstimate(mean=float(returns.mean()), stderr=se, returns=returns)
