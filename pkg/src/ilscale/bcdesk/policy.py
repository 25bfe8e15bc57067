"""Policies mapping flattened observations to action probabilities."""

from __future__ import annotations

import copy

import numpy as np

from .env import N_PELLETS, OBS_DIM, SIZE, expert_action

N_ACTIONS = 4
ACTIVE_INPUTS = 1 + N_PELLETS


def param_count(width: int, in_dim: int = OBS_DIM, n_actions: int = N_ACTIONS) -> int:
    """Effective parameters: every layer is scaled with width, biases included."""
    return width * (in_dim + n_actions) + width + n_actions


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


class BcPolicy:
    """One ReLU hidden layer of `width` units and a 4-way softmax head.

    The head starts at zero, so a fresh policy is exactly uniform.
    """

    def __init__(self, width: int, rng: np.random.Generator | None = None, in_dim: int = OBS_DIM,
                 zero: bool = False):
        if width < 1:
            raise ValueError("width must be positive")
        self.width = width
        self.in_dim = in_dim
        if zero or rng is None:
            w1 = np.zeros((in_dim, width))
        else:
            # He init over the inputs that are actually hot (agent + pellets)
            w1 = rng.normal(0.0, np.sqrt(2.0 / ACTIVE_INPUTS), size=(in_dim, width))
        self.params = {
            "w1": w1,
            "b1": np.zeros(width),
            "w2": np.zeros((width, N_ACTIONS)),
            "b2": np.zeros(N_ACTIONS),
        }

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params.values())

    def copy(self) -> "BcPolicy":
        return copy.deepcopy(self)

    def _hidden(self, obs: np.ndarray) -> np.ndarray:
        return np.maximum(obs @ self.params["w1"] + self.params["b1"], 0.0)

    def logits(self, obs: np.ndarray) -> np.ndarray:
        return self._hidden(obs) @ self.params["w2"] + self.params["b2"]

    def probs(self, obs: np.ndarray) -> np.ndarray:
        return softmax(self.logits(np.atleast_2d(obs)))

    def loss(self, obs: np.ndarray, actions: np.ndarray) -> float:
        """Mean per-timestep cross-entropy of the expert actions, in nats."""
        lp = log_softmax(self.logits(obs))
        return float(-lp[np.arange(len(actions)), actions].mean())

    def loss_and_grads(self, obs: np.ndarray, actions: np.ndarray) -> tuple[float, dict]:
        pre = obs @ self.params["w1"] + self.params["b1"]
        hidden = np.maximum(pre, 0.0)
        logits = hidden @ self.params["w2"] + self.params["b2"]
        lp = log_softmax(logits)
        m = len(actions)
        idx = np.arange(m)
        loss = float(-lp[idx, actions].mean())
        dlogits = np.exp(lp)
        dlogits[idx, actions] -= 1.0
        dlogits /= m
        dhidden = dlogits @ self.params["w2"].T
        dhidden[pre <= 0] = 0.0
        grads = {
            "w2": hidden.T @ dlogits,
            "b2": dlogits.sum(axis=0),
            "w1": obs.T @ dhidden,
            "b1": dhidden.sum(axis=0),
        }
        return loss, grads


class UniformPolicy:
    def probs(self, obs: np.ndarray) -> np.ndarray:
        obs = np.atleast_2d(obs)
        return np.full((len(obs), N_ACTIONS), 1.0 / N_ACTIONS)


class ExpertPolicy:
    """The scripted expert as a one-hot distribution, recovered from the observation."""

    def probs(self, obs: np.ndarray) -> np.ndarray:
        obs = np.atleast_2d(obs)
        out = np.zeros((len(obs), N_ACTIONS))
        for i, o in enumerate(obs):
            planes = o.reshape(2, SIZE, SIZE)
            agent = np.argwhere(planes[0] > 0.5)[0]
            out[i, expert_action(agent, planes[1] > 0.5)] = 1.0
        return out
