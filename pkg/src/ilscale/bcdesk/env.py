"""9x9 gridworld with five pellets; +1 per pellet, 40-step limit."""

from __future__ import annotations

import numpy as np

SIZE = 9
N_PELLETS = 5
STEP_LIMIT = 40
# action order doubles as the expert's tie-break order
ACTIONS = ("up", "down", "left", "right")
MOVES = np.array([[-1, 0], [1, 0], [0, -1], [0, 1]])
OBS_DIM = SIZE * SIZE * 2


def episode_rng(seed: int, episode: int) -> np.random.Generator:
    return np.random.default_rng([seed, episode])


class GridWorld:
    """Single episode. Observation: one-hot agent plane then pellet plane, flattened."""

    def __init__(self, rng: np.random.Generator, size: int = SIZE, n_pellets: int = N_PELLETS,
                 step_limit: int = STEP_LIMIT):
        self.size = size
        self.step_limit = step_limit
        cells = rng.choice(size * size, size=n_pellets + 1, replace=False)
        self.agent = np.array(divmod(int(cells[0]), size))
        self.pellets = np.zeros((size, size), dtype=bool)
        for c in cells[1:]:
            self.pellets[divmod(int(c), size)] = True
        self.steps = 0
        self.total_return = 0.0

    @classmethod
    def from_seed(cls, seed: int, episode: int = 0) -> "GridWorld":
        return cls(episode_rng(seed, episode))

    @property
    def done(self) -> bool:
        return self.steps >= self.step_limit or not self.pellets.any()

    def observation(self) -> np.ndarray:
        obs = np.zeros((2, self.size, self.size))
        obs[0, self.agent[0], self.agent[1]] = 1.0
        obs[1] = self.pellets
        return obs.reshape(-1)

    def step(self, action: int) -> float:
        if self.done:
            raise RuntimeError("episode is over")
        self.agent = np.clip(self.agent + MOVES[action], 0, self.size - 1)
        self.steps += 1
        reward = 0.0
        if self.pellets[self.agent[0], self.agent[1]]:
            self.pellets[self.agent[0], self.agent[1]] = False
            reward = 1.0
        self.total_return += reward
        return reward


def expert_action(agent: np.ndarray, pellets: np.ndarray) -> int:
    """Step toward the nearest pellet (Manhattan = shortest path on an open grid).

    Ties between pellets go to the smallest (row, col); ties between moves
    follow ACTIONS order.
    """
    rows, cols = np.nonzero(pellets)
    if len(rows) == 0:
        return 0
    dist = np.abs(rows - agent[0]) + np.abs(cols - agent[1])
    k = int(np.argmin(dist))  # nonzero() is row-major, so argmin picks smallest (row, col)
    target = np.array([rows[k], cols[k]])
    here = int(dist[k])
    for a, move in enumerate(MOVES):
        nxt = agent + move
        if np.abs(target - nxt).sum() < here:
            return a
    return 0
