"""Diffusion noise schedules (variance-preserving, linear beta)."""

from __future__ import annotations

import hashlib
import json

import numpy as np


class Schedule:
    """Forward-noising schedule: Y_t = sqrt(abar_t) Y + sqrt(1 - abar_t) eps.

    Arrays are indexed by timestep t = 0..T with beta[0] = 0 and
    alpha_bar[0] = 1 (t = 0 is the noiseless level). sigma2[t] is the
    ancestral-sampling posterior variance for the step t -> t-1.
    """

    __slots__ = ("T", "beta", "alpha", "alpha_bar", "sigma2", "_digest")

    def __init__(self, beta: np.ndarray):
        beta = np.asarray(beta, dtype=float)
        if beta.ndim != 1 or beta.size < 1:
            raise ValueError("beta must be a nonempty 1-d array")
        if np.any(beta <= 0) or np.any(beta >= 1):
            raise ValueError("beta entries must lie in (0, 1)")
        T = beta.size
        full_beta = np.concatenate([[0.0], beta])
        alpha = 1.0 - full_beta
        alpha_bar = np.cumprod(alpha)
        sigma2 = np.zeros(T + 1)
        # DDPM posterior variance beta_t * (1 - abar_{t-1}) / (1 - abar_t);
        # zero at t = 1 (the final, deterministic step).
        sigma2[1:] = full_beta[1:] * (1.0 - alpha_bar[:-1]) / (1.0 - alpha_bar[1:])
        for a in (full_beta, alpha, alpha_bar, sigma2):
            a.setflags(write=False)
        object.__setattr__(self, "T", T)
        object.__setattr__(self, "beta", full_beta)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "alpha_bar", alpha_bar)
        object.__setattr__(self, "sigma2", sigma2)
        payload = json.dumps({"beta": beta.tolist()}, separators=(",", ":"))
        object.__setattr__(self, "_digest", hashlib.sha256(payload.encode()).hexdigest())

    def __setattr__(self, *_):
        raise AttributeError("Schedule is immutable")

    def check_t(self, t: int) -> int:
        t = int(t)
        if not 0 <= t <= self.T:
            raise ValueError(f"timestep {t} outside [0, {self.T}]")
        return t

    def noise_scale(self, t: int) -> float:
        """sqrt(1 - alpha_bar_t), the score-to-epsilon conversion factor."""
        return float(np.sqrt(1.0 - self.alpha_bar[self.check_t(t)]))

    def digest(self) -> str:
        return self._digest

    def __eq__(self, other) -> bool:
        return isinstance(other, Schedule) and np.array_equal(self.beta, other.beta)


def make_schedule(T: int, beta_min: float = 1e-4, beta_max: float = 0.02) -> Schedule:
    """Linear beta schedule over T steps."""
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    if not (0.0 < beta_min <= beta_max < 1.0):
        raise ValueError(f"need 0 < beta_min <= beta_max < 1, got ({beta_min}, {beta_max})")
    return Schedule(np.linspace(beta_min, beta_max, T))
