"""Concept-subspace identification at a point: spanning-prompt basis
estimation and coordinate-mask estimation, both yielding projectors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

from conceptlab.oracle import ScoreOracle

DEFAULT_THRES = 0.99
DEFAULT_MASK_THRESHOLD = 0.1
RANK_RTOL = 1e-8


@dataclass(frozen=True)
class DeltaMatrix:
    """Columns eps(y,t|x_i) - eps(y,t|x_0); shape (..., m, K)."""

    columns: np.ndarray
    prompts: tuple[str, ...]

    def __post_init__(self):
        if self.columns.shape[-1] < 1:
            raise ValueError("delta matrix needs at least one column")
        if not np.all(np.isfinite(self.columns)):
            raise ValueError("delta matrix has non-finite entries")


class SubspaceProjector:
    """Symmetric idempotent projector, in basis or diagonal-mask form.

    ``matrix`` may carry leading batch axes. ``warning`` flags entries where
    the spanning data was degenerate (all-zero) and the projector is zero.
    """

    __slots__ = ("matrix", "rank", "form", "warning", "mask_bits")

    def __init__(self, matrix, rank, form, warning, mask_bits=None):
        self.matrix = np.asarray(matrix, dtype=float)
        self.rank = rank
        self.form = form
        self.warning = warning
        self.mask_bits = mask_bits

    @property
    def m(self) -> int:
        return self.matrix.shape[-1]

    def project(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape[-1] != self.m:
            raise ValueError(f"vector has {v.shape[-1]} coordinates, projector has {self.m}")
        return np.einsum("...ij,...j->...i", self.matrix, v)

    def basis(self) -> np.ndarray:
        """Orthonormal basis of the column space (single projector only)."""
        if self.matrix.ndim != 2:
            raise ValueError("basis() requires an unbatched projector")
        if self.rank == 0:
            return np.zeros((self.m, 0))
        vals, vecs = np.linalg.eigh(self.matrix)
        return vecs[:, vals > 0.5]

    def to_dict(self) -> dict:
        if self.matrix.ndim != 2:
            raise ValueError("serialization requires an unbatched projector")
        if self.form == "mask":
            return {"form": "mask", "bits": [int(b) for b in self.mask_bits]}
        return {"form": "basis", "columns": self.basis().T.tolist()}


def _check_spanning(qs) -> None:
    """Spanning prompts must share the distribution on every unvaried space:
    each joint must factor between the varied and the fixed space groups."""
    spaces = qs[0].spaces
    for q in qs[1:]:
        if set(s.name for s in q.spaces) != set(s.name for s in spaces):
            raise ValueError("spanning prompts must cover the same concept spaces")
    varied = []
    fixed = []
    for s in spaces:
        m0 = qs[0].marginal(s.name)
        if any(not np.allclose(q.marginal(s.name), m0, atol=1e-10) for q in qs[1:]):
            varied.append(s.name)
        else:
            fixed.append(s.name)
    if not fixed:
        return
    for q in qs:
        vi = [q.space_index(n) for n in varied]
        fi = [q.space_index(n) for n in fixed]
        w = np.transpose(q.weights, vi + fi)
        mv = w.reshape(int(np.prod(w.shape[: len(vi)]) or 1), -1).sum(axis=1)
        mf = w.reshape(int(np.prod(w.shape[: len(vi)]) or 1), -1).sum(axis=0)
        outer = np.multiply.outer(mv, mf).reshape(w.shape)
        if not np.allclose(w, outer, atol=1e-10):
            raise ValueError(
                "spanning prompt does not factor between the varied concept "
                f"{varied} and the fixed concepts {fixed}"
            )


def delta_matrix(oracle: ScoreOracle, y, t: int, prompts) -> DeltaMatrix:
    """Epsilon-difference columns against the first (reference) prompt."""
    prompts = list(prompts)
    if len(prompts) < 2:
        raise ValueError("need a reference prompt plus at least one spanning prompt")
    table = getattr(oracle, "table", None)
    if table is not None:
        _check_spanning([table.resolve(p) for p in prompts])
    eps = oracle.epsilon_many(y, t, prompts)  # (..., m, K+1)
    cols = eps[..., 1:] - eps[..., :1]
    return DeltaMatrix(columns=cols, prompts=tuple(prompts))


def basis_projector_matrices(cols: np.ndarray, thres: float = DEFAULT_THRES):
    """Batched core of basis estimation.

    cols: (..., m, K). Returns (P (..., m, m), rank (...,), warn (...,)) where
    rank is the least number of leading singular directions explaining at
    least ``thres`` of the total squared singular value mass.
    """
    if not 0.0 < thres <= 1.0:
        raise ValueError(f"thres must be in (0, 1], got {thres}")
    cols = np.asarray(cols, dtype=float)
    U, s, _ = np.linalg.svd(cols, full_matrices=False)
    s2 = s * s
    total = s2.sum(axis=-1)
    warn = total == 0.0
    safe_total = np.where(warn, 1.0, total)
    frac = np.cumsum(s2, axis=-1) / safe_total[..., None]
    # smallest r with cumulative fraction >= thres (tolerate roundoff)
    reached = frac >= thres - 1e-12
    rank = 1 + np.argmax(reached, axis=-1)
    rank = np.where(warn, 0, rank)
    k = s.shape[-1]
    keep = np.arange(k) < rank[..., None]
    P = np.einsum("...ik,...k,...jk->...ij", U, keep.astype(float), U)
    return P, rank, warn


def find_subspace_basis(dm: DeltaMatrix, thres: float = DEFAULT_THRES) -> SubspaceProjector:
    P, rank, warn = basis_projector_matrices(dm.columns, thres)
    if P.ndim == 2:
        return SubspaceProjector(P, int(rank), "basis", bool(warn))
    return SubspaceProjector(P, rank, "basis", warn)


def find_subspace_mask(
    oracle: ScoreOracle,
    y,
    t: int,
    pair: tuple[str, str],
    threshold: float = DEFAULT_MASK_THRESHOLD,
    blur_sigma: float = 0.0,
    grid_shape: tuple[int, int] | None = None,
    grid_order: str = "C",
) -> SubspaceProjector:
    """Diagonal projector keeping coordinates where the two prompts' epsilon
    predictions differ by more than ``threshold`` times the peak difference."""
    if threshold < 0:
        raise ValueError("threshold must be >= 0")
    y = np.asarray(y, dtype=float)
    if y.ndim != 1:
        raise ValueError("mask estimation is pointwise; y must be a single point")
    x1, x2 = pair
    diff = oracle.epsilon(y, t, x1) - oracle.epsilon(y, t, x2)
    mag = np.abs(diff)
    if blur_sigma > 0:
        if grid_shape is None:
            raise ValueError("blur_sigma > 0 requires a grid_shape")
        grid = mag.reshape(grid_shape, order=grid_order)
        grid = gaussian_filter(grid, sigma=blur_sigma, mode="reflect", truncate=3.0)
        mag = grid.reshape(-1, order=grid_order)
    peak = mag.max()
    bits = (mag > threshold * peak) if peak > 0 else np.zeros(mag.shape, dtype=bool)
    warn = not bits.any()
    return SubspaceProjector(
        np.diag(bits.astype(float)), int(bits.sum()), "mask", warn, mask_bits=bits.astype(int)
    )


def project(p: SubspaceProjector, v: np.ndarray) -> np.ndarray:
    return p.project(v)


def numerical_rank(cols: np.ndarray, rtol: float = RANK_RTOL) -> int:
    """Rank by the relative singular-value cutoff sigma_i / sigma_1 > rtol."""
    s = np.linalg.svd(np.asarray(cols, dtype=float), compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def max_principal_angle(p1: SubspaceProjector, p2: SubspaceProjector) -> float:
    """Largest principal angle (radians) between two projectors' ranges."""
    b1, b2 = p1.basis(), p2.basis()
    if b1.shape[1] != b2.shape[1]:
        return float(np.pi / 2)
    if b1.shape[1] == 0:
        return 0.0
    sv = np.linalg.svd(b1.T @ b2, compute_uv=False)
    return float(np.arccos(np.clip(sv.min(), -1.0, 1.0)))
