"""Seeded policy evaluation: episode rollouts, summary stats, and sweeps."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import torch

from .envs import EnvSpec, make_env
from .policy import BlendedPolicy, sample_action


@dataclass
class EvalStats:
    episodes: int
    returns: list
    lengths: list

    @property
    def mean_return(self) -> float:
        return float(np.mean(self.returns))

    @property
    def std_return(self) -> float:
        return float(np.std(self.returns))

    @property
    def mean_length(self) -> float:
        return float(np.mean(self.lengths))

    @property
    def std_length(self) -> float:
        return float(np.std(self.lengths))

    def summary(self) -> dict:
        return {
            "episodes": self.episodes,
            "mean_return": self.mean_return,
            "std_return": self.std_return,
            "mean_length": self.mean_length,
            "std_length": self.std_length,
        }


def run_episode(policy: BlendedPolicy, spec: EnvSpec, seed: int):
    """One seeded episode; actions sampled from the blended distribution."""
    env = make_env(replace(spec, seed=seed))
    gen = torch.Generator()
    gen.manual_seed(seed)
    raw, z = env.reset()
    total, length = 0.0, 0
    done = False
    while not done:
        with torch.no_grad():
            out = policy(z.data.unsqueeze(0), raw.unsqueeze(0))
            action, _ = sample_action(out, gen)
        raw, z, reward, done = env.step(int(action[0]))
        total += reward
        length += 1
    return total, length


def evaluate_policy(policy: BlendedPolicy, spec: EnvSpec, episodes: int = 10,
                    base_seed: int = 0) -> EvalStats:
    returns, lengths = [], []
    for ep in range(episodes):
        r, n = run_episode(policy, spec, base_seed + ep)
        returns.append(r)
        lengths.append(n)
    return EvalStats(episodes, returns, lengths)


def random_policy_stats(spec: EnvSpec, episodes: int = 10,
                        base_seed: int = 0) -> EvalStats:
    """Uniform-random baseline, measured in-repo."""
    returns, lengths = [], []
    for ep in range(episodes):
        env = make_env(replace(spec, seed=base_seed + ep))
        rng = np.random.default_rng(base_seed + ep)
        env.reset()
        total, length, done = 0.0, 0, False
        while not done:
            _, _, reward, done = env.step(int(rng.integers(len(env.action_names))))
            total += reward
            length += 1
        returns.append(total)
        lengths.append(length)
    return EvalStats(episodes, returns, lengths)
