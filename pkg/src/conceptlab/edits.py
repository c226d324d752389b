"""Edited epsilon fields: projection edits plus the composition and
negative-prompting baselines they are compared against."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.ndimage import gaussian_filter

from conceptlab.concepts import EMPTY_PROMPT
from conceptlab.oracle import ScoreOracle
from conceptlab.subspace import (
    DEFAULT_MASK_THRESHOLD,
    DEFAULT_THRES,
    basis_projector_matrices,
    delta_matrix,
)

METHODS = ("projection", "composition", "negative", "none")


@dataclass(frozen=True)
class MaskParams:
    pair: tuple[str, str]
    threshold: float = DEFAULT_MASK_THRESHOLD
    blur_sigma: float = 0.0
    grid_shape: tuple[int, int] | None = None
    grid_order: str = "C"


@dataclass(frozen=True)
class EditPlan:
    """How to build the conditional epsilon at each (y, t).

    For projection, the target may be a prompt (``x_new``) or a weighted
    mixture of prompt epsilons (``new_mixture``) that corresponds to no
    single prompt. ``switch_fraction`` leaves the first fraction of sampling
    steps unedited (plain x_orig).
    """

    method: str
    x_orig: str
    x_new: str | None = None
    new_mixture: tuple[tuple[float, str], ...] | None = None
    spanning_prompts: tuple[str, ...] = ()
    thres: float = DEFAULT_THRES
    mask: MaskParams | None = None
    attachments: tuple[tuple[float, str], ...] = ()
    x_neg: str | None = None
    strength: float = 1.0
    switch_fraction: float = 0.0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.method == "projection":
            if self.mask is None and len(self.spanning_prompts) < 2:
                raise ValueError("projection needs >= 2 spanning prompts (or mask params)")
            if (self.x_new is None) == (self.new_mixture is None):
                raise ValueError("projection needs exactly one of x_new / new_mixture")
        if self.method == "negative":
            if self.x_neg is None:
                raise ValueError("negative prompting needs x_neg")
            if self.strength < 0:
                raise ValueError("strength must be >= 0")
        if not 0.0 <= self.switch_fraction < 1.0:
            raise ValueError("switch_fraction must be in [0, 1)")
        if self.new_mixture is not None:
            object.__setattr__(
                self, "new_mixture", tuple((float(w), p) for w, p in self.new_mixture)
            )
        object.__setattr__(self, "spanning_prompts", tuple(self.spanning_prompts))
        object.__setattr__(
            self, "attachments", tuple((float(w), p) for w, p in self.attachments)
        )

    def to_dict(self) -> dict:
        d = {"method": self.method, "x_orig": self.x_orig}
        if self.x_new is not None:
            d["x_new"] = self.x_new
        if self.new_mixture is not None:
            d["new_mixture"] = [[w, p] for w, p in self.new_mixture]
        if self.spanning_prompts:
            d["spanning_prompts"] = list(self.spanning_prompts)
        if self.method == "projection":
            d["thres"] = self.thres
        if self.mask is not None:
            d["mask"] = {
                "pair": list(self.mask.pair),
                "threshold": self.mask.threshold,
                "blur_sigma": self.mask.blur_sigma,
                "grid_shape": list(self.mask.grid_shape) if self.mask.grid_shape else None,
                "grid_order": self.mask.grid_order,
            }
        if self.attachments:
            d["attachments"] = [[w, p] for w, p in self.attachments]
        if self.x_neg is not None:
            d["x_neg"] = self.x_neg
            d["strength"] = self.strength
        if self.switch_fraction:
            d["switch_fraction"] = self.switch_fraction
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EditPlan":
        mask = None
        if d.get("mask"):
            md = d["mask"]
            mask = MaskParams(
                pair=tuple(md["pair"]),
                threshold=md.get("threshold", DEFAULT_MASK_THRESHOLD),
                blur_sigma=md.get("blur_sigma", 0.0),
                grid_shape=tuple(md["grid_shape"]) if md.get("grid_shape") else None,
                grid_order=md.get("grid_order", "C"),
            )
        return cls(
            method=d["method"],
            x_orig=d["x_orig"],
            x_new=d.get("x_new"),
            new_mixture=tuple((w, p) for w, p in d["new_mixture"])
            if d.get("new_mixture")
            else None,
            spanning_prompts=tuple(d.get("spanning_prompts", ())),
            thres=d.get("thres", DEFAULT_THRES),
            mask=mask,
            attachments=tuple((w, p) for w, p in d.get("attachments", ())),
            x_neg=d.get("x_neg"),
            strength=d.get("strength", 1.0),
            switch_fraction=d.get("switch_fraction", 0.0),
        )


def mixture_target_epsilon(
    oracle: ScoreOracle, components: Sequence[tuple[float, str]], y, t: int
) -> np.ndarray:
    """Weighted average of prompt epsilons; a target that need not match any
    single prompt."""
    weights = np.array([w for w, _ in components], dtype=float)
    if abs(weights.sum() - 1.0) > 1e-9:
        raise ValueError(f"mixture weights sum to {weights.sum()!r}, not 1")
    out = None
    for w, prompt in components:
        e = w * oracle.epsilon(y, t, prompt)
        out = e if out is None else out + e
    return out


def centered_epsilon(oracle: ScoreOracle, q_prompt: str, q0_prompt: str, y, t: int) -> np.ndarray:
    return oracle.epsilon(y, t, q_prompt) - oracle.epsilon(y, t, q0_prompt)


def composed_epsilon(
    oracle: ScoreOracle, x_orig: str, attachments: Sequence[tuple[float, str]], y, t: int
) -> np.ndarray:
    """Score-addition baseline: attach centered prompt epsilons wholesale."""
    out = oracle.epsilon(y, t, x_orig)
    if attachments:
        base = oracle.epsilon(y, t, EMPTY_PROMPT)
        for w, prompt in attachments:
            out = out + w * (oracle.epsilon(y, t, prompt) - base)
    return out


def negative_epsilon(
    oracle: ScoreOracle, x_orig: str, x_neg: str, strength: float, y, t: int
) -> np.ndarray:
    """Negative-prompting baseline: subtract a centered unwanted-prompt epsilon."""
    if strength < 0:
        raise ValueError("strength must be >= 0")
    out = oracle.epsilon(y, t, x_orig)
    if strength > 0 and x_neg != EMPTY_PROMPT:
        base = oracle.epsilon(y, t, EMPTY_PROMPT)
        out = out - strength * (oracle.epsilon(y, t, x_neg) - base)
    return out


def _target_epsilon(oracle, plan, y, t):
    if plan.new_mixture is not None:
        return mixture_target_epsilon(oracle, plan.new_mixture, y, t)
    return oracle.epsilon(y, t, plan.x_new)


def _mask_bits_batch(oracle, mask: MaskParams, y, t):
    x1, x2 = mask.pair
    diff = oracle.epsilon(y, t, x1) - oracle.epsilon(y, t, x2)
    mag = np.abs(diff)
    if mask.blur_sigma > 0:
        if mask.grid_shape is None:
            raise ValueError("blur_sigma > 0 requires grid_shape")
        flat = np.atleast_2d(mag)
        blurred = np.empty_like(flat)
        for i, row in enumerate(flat):
            g = gaussian_filter(
                row.reshape(mask.grid_shape, order=mask.grid_order),
                sigma=mask.blur_sigma,
                mode="reflect",
                truncate=3.0,
            )
            blurred[i] = g.reshape(-1, order=mask.grid_order)
        mag = blurred.reshape(mag.shape)
    peak = mag.max(axis=-1, keepdims=True)
    bits = np.where(peak > 0, mag > mask.threshold * peak, False)
    return bits


def edited_epsilon(
    oracle: ScoreOracle, plan: EditPlan, y, t: int, warnings: list | None = None
) -> np.ndarray:
    """The conditional epsilon under the plan; batched over leading axes of y."""
    eps_orig = oracle.epsilon(y, t, plan.x_orig)
    if plan.method == "none":
        return eps_orig
    if plan.method == "composition":
        return composed_epsilon(oracle, plan.x_orig, plan.attachments, y, t)
    if plan.method == "negative":
        return negative_epsilon(oracle, plan.x_orig, plan.x_neg, plan.strength, y, t)
    eps_new = _target_epsilon(oracle, plan, y, t)
    if plan.mask is not None:
        bits = _mask_bits_batch(oracle, plan.mask, y, t)
        n_zero = int(np.sum(~bits.any(axis=-1)))
        out = np.where(bits, eps_new, eps_orig)
    else:
        dm = delta_matrix(oracle, y, t, list(plan.spanning_prompts))
        P, _, warn = basis_projector_matrices(dm.columns, plan.thres)
        n_zero = int(np.sum(warn))
        out = eps_orig - np.einsum("...ij,...j->...i", P, eps_orig - eps_new)
    if n_zero and warnings is not None:
        warnings.append({"t": int(t), "zero_projectors": n_zero})
    return out
