"""DDPM ancestral sampling with classifier-free guidance and per-step
concept editing.

Each chain owns a generator derived from (seed, chain index), so results are
independent of batching and execution order. The default update is the
standard DDPM posterior mean; the simplified literal update (subtracting the
raw epsilon) is available behind a flag for fidelity experiments but does not
sample the correct distribution.
"""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from conceptlab.concepts import EMPTY_PROMPT
from conceptlab.edits import EditPlan, edited_epsilon
from conceptlab.oracle import ScoreOracle
from conceptlab.schedule import Schedule

_CHUNK_BUDGET_FLOATS = 24_000_000


class SamplingError(RuntimeError):
    """A chain aborted (oracle failure or non-finite epsilon)."""


def guidance_combine(eps_uncond: np.ndarray, eps_cond: np.ndarray, w: float) -> np.ndarray:
    """Classifier-free guidance: eps_uncond + w * (eps_cond - eps_uncond)."""
    eps_uncond = np.asarray(eps_uncond, dtype=float)
    eps_cond = np.asarray(eps_cond, dtype=float)
    if eps_uncond.shape != eps_cond.shape:
        raise ValueError(
            f"shape mismatch: {eps_uncond.shape} vs {eps_cond.shape}"
        )
    return eps_uncond + w * (eps_cond - eps_uncond)


def plan_digest(plan: EditPlan) -> str:
    payload = json.dumps(plan.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode()).hexdigest()


@dataclass
class RunArtifact:
    seed: int
    schedule_digest: str
    plan_digest: str
    samples: np.ndarray
    warnings: list = field(default_factory=list)
    guidance: float = 1.0

    def save(self, out_dir: str | Path) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        manifest = {
            "seed": self.seed,
            "schedule_digest": self.schedule_digest,
            "plan_digest": self.plan_digest,
            "guidance": self.guidance,
            "n": int(self.samples.shape[0]),
            "m": int(self.samples.shape[1]),
            "warnings": self.warnings,
        }
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
        with open(out / "samples.csv", "w") as fh:
            for row in self.samples:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")

    @classmethod
    def load(cls, out_dir: str | Path) -> "RunArtifact":
        out = Path(out_dir)
        manifest = json.loads((out / "manifest.json").read_text())
        samples = np.loadtxt(out / "samples.csv", delimiter=",", ndmin=2)
        return cls(
            seed=manifest["seed"],
            schedule_digest=manifest["schedule_digest"],
            plan_digest=manifest["plan_digest"],
            samples=samples,
            warnings=manifest.get("warnings", []),
            guidance=manifest.get("guidance", 1.0),
        )


def _chain_noise(children, m: int, T: int):
    k = len(children)
    y = np.empty((k, m))
    noise = np.empty((k, T, m))
    for i, child in enumerate(children):
        rng = np.random.default_rng(child)
        y[i] = rng.standard_normal(m)
        noise[i] = rng.standard_normal((T, m))
    return y, noise


def _run_chunk(oracle, plan, schedule, w, children, paper_literal_update, warnings):
    T = schedule.T
    m = oracle.m
    switch_until = (1.0 - plan.switch_fraction) * T
    y, noise = _chain_noise(children, m, T)
    for t in range(T, 0, -1):
        if plan.switch_fraction > 0 and t > switch_until:
            eps_cond = oracle.epsilon(y, t, plan.x_orig)
        else:
            eps_cond = edited_epsilon(oracle, plan, y, t, warnings=warnings)
        if w == 1.0:
            eps = eps_cond
        else:
            eps_empty = oracle.epsilon(y, t, EMPTY_PROMPT)
            eps = guidance_combine(eps_empty, eps_cond, w)
        if not np.all(np.isfinite(eps)):
            bad = int(np.sum(~np.isfinite(eps).all(axis=-1)))
            raise SamplingError(f"non-finite epsilon at t={t} in {bad} chains")
        if paper_literal_update:
            mean = y - eps
        else:
            a = schedule.alpha[t]
            abar = schedule.alpha_bar[t]
            mean = (y - ((1.0 - a) / math.sqrt(1.0 - abar)) * eps) / math.sqrt(a)
        if t > 1:
            y = mean + math.sqrt(schedule.sigma2[t]) * noise[:, t - 1, :]
        else:
            y = mean
    return y


def ddpm_sample(
    oracle: ScoreOracle,
    plan: EditPlan,
    schedule: Schedule,
    w: float = 1.0,
    n: int = 1,
    seed: int = 0,
    paper_literal_update: bool = False,
    threads: int = 1,
) -> RunArtifact:
    """Ancestral sampling: y_T ~ N(0, I), then T guided denoising steps."""
    if n < 1:
        raise ValueError("n must be >= 1")
    m = oracle.m
    if schedule.T != oracle.T:
        raise ValueError(f"schedule T={schedule.T} != oracle T={oracle.T}")
    children = np.random.SeedSequence(seed).spawn(n)
    chunk = max(1, min(n, _CHUNK_BUDGET_FLOATS // ((schedule.T + 1) * m)))
    chunks = [children[i : i + chunk] for i in range(0, n, chunk)]
    chunk_warnings: list[list] = [[] for _ in chunks]

    def work(i):
        return _run_chunk(
            oracle, plan, schedule, w, chunks[i], paper_literal_update, chunk_warnings[i]
        )

    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, range(len(chunks))))
    else:
        parts = [work(i) for i in range(len(chunks))]
    samples = np.concatenate(parts, axis=0)
    warnings: list = []
    for ws in chunk_warnings:
        warnings.extend(ws)
    return RunArtifact(
        seed=seed,
        schedule_digest=schedule.digest(),
        plan_digest=plan_digest(plan),
        samples=samples,
        warnings=warnings,
        guidance=w,
    )
