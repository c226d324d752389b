"""The epsilon-prediction contract shared by the analytic world and remote
backends.

All downstream algebra (subspace estimation, editing, sampling) consumes
epsilon-vectors; eps(y, t) = -sqrt(1 - alpha_bar_t) * score_t(y) for t >= 1.
At t = 0 the conversion factor vanishes, so the analytic oracle returns the
negated score itself there; subspace projectors only depend on directions, so
this keeps noiseless-level estimation meaningful.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from conceptlab.concepts import PromptTable
from conceptlab.schedule import Schedule
from conceptlab.world import MixtureWorld


@dataclass(frozen=True)
class OracleRequest:
    y: np.ndarray
    t: int
    prompt: str


def score_to_epsilon(score: np.ndarray, t: int, schedule: Schedule) -> np.ndarray:
    return -schedule.noise_scale(t) * np.asarray(score)


def epsilon_to_score(eps: np.ndarray, t: int, schedule: Schedule) -> np.ndarray:
    c = schedule.noise_scale(t)
    if c == 0.0:
        raise ValueError("epsilon/score conversion is undefined at t = 0")
    return -np.asarray(eps) / c


class ScoreOracle:
    """Evaluation contract: eps-prediction at (y, t) conditioned on a prompt."""

    m: int
    T: int

    def epsilon(self, y: np.ndarray, t: int, prompt: str) -> np.ndarray:
        raise NotImplementedError

    def evaluate(self, req: OracleRequest) -> np.ndarray:
        return self.epsilon(req.y, req.t, req.prompt)

    def epsilon_many(self, y: np.ndarray, t: int, prompts: list[str]) -> np.ndarray:
        """Stacked per-prompt evaluations: (..., m, len(prompts))."""
        cols = [self.epsilon(y, t, p) for p in prompts]
        return np.stack(cols, axis=-1)


class AnalyticOracle(ScoreOracle):
    """Exact eps-predictions from a Gaussian-mixture world."""

    def __init__(self, world: MixtureWorld, table: PromptTable, schedule: Schedule):
        self.world = world
        self.table = table
        self.schedule = schedule
        self.m = world.m
        self.T = schedule.T

    def epsilon(self, y, t, prompt):
        t = self.schedule.check_t(t)
        q = self.table.resolve(prompt)
        s = self.world.score(q, y, t, self.schedule)
        if t == 0:
            return -s
        return -self.schedule.noise_scale(t) * s
