"""Point-mass environment used to sanity-check the learner.

A mass on a line starts at a random offset and is pushed by a bounded force;
the reward is the negative squared distance to the origin. A learner that
works at all reaches a far better return than a random policy within a few
dozen short epochs.
"""
from __future__ import annotations

import numpy as np

from .env import EpisodeOutcome
from .seeding import substream


class PointMassEnv:
    obs_dim = 2
    act_dim = 1

    def __init__(self, horizon: int = 50, dt: float = 0.1, max_force: float = 1.0):
        self.horizon, self.dt, self.max_force = horizon, dt, max_force
        self.x = self.v = 0.0
        self.t = 0
        self.total_reward = 0.0

    def reset(self, seed: int | None = None) -> np.ndarray:
        rng = substream(0 if seed is None else seed, "toy-reset")
        self.x = float(rng.uniform(-1.0, 1.0))
        self.v = 0.0
        self.t = 0
        self.total_reward = 0.0
        return np.array([self.x, self.v])

    def step(self, action):
        f = float(np.clip(np.asarray(action, dtype=np.float64).ravel()[0], -1.0, 1.0)) * self.max_force
        # damped double integrator
        self.v = 0.8 * self.v + f * self.dt
        self.x += self.v
        self.t += 1
        r = -self.x * self.x
        self.total_reward += r
        truncated = self.t >= self.horizon
        return np.array([self.x, self.v]), r, truncated, {"truncated": truncated}

    def outcome(self) -> EpisodeOutcome:
        return EpisodeOutcome(pieces=[], total_reward=self.total_reward, step_count=self.t, overheat_flag=False)


def random_policy_return(n_episodes: int = 200, seed: int = 0) -> float:
    """Mean return of uniform random actions in [-1, 1]."""
    env = PointMassEnv()
    rng = substream(seed, "toy-random")
    rets = []
    for i in range(n_episodes):
        env.reset(seed=int(rng.integers(2**31)))
        done = False
        while not done:
            _, _, done, _ = env.step(rng.uniform(-1.0, 1.0, 1))
        rets.append(env.total_reward)
    return float(np.mean(rets))
