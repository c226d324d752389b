"""Exactly computable Gaussian-mixture generative worlds.

A world draws categorical concept values, emits a Gaussian per value in each
coordinate block, concatenates the blocks (Y_Z..., Y_W..., xi), and applies a
block-diagonal affine map g. Every operation (density, score, posterior,
sampling) is available in closed form at every noise level of a
variance-preserving schedule, so downstream claims can be tested exactly.

``SeparableWorld`` keeps the Z- and W-blocks causally independent given the
concepts; ``InteractionWorld`` deliberately breaks that by letting the Z-block
emission mean depend on the (z, w) pair.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.special import logsumexp

from conceptlab.concepts import ConceptDistribution, ConceptSpace
from conceptlab.schedule import Schedule

_LOG_2PI = math.log(2.0 * math.pi)


class GaussianFactor:
    """Per-value diagonal Gaussian emission for one concept space."""

    __slots__ = ("space", "means", "variances")

    def __init__(self, space: ConceptSpace, means, variances):
        means = np.asarray(means, dtype=float)
        variances = np.asarray(variances, dtype=float)
        L = len(space)
        if means.ndim != 2 or means.shape[0] != L:
            raise ValueError(f"means must be ({L}, d), got {means.shape}")
        if variances.shape != means.shape:
            raise ValueError("variances must match means shape")
        if np.any(variances <= 0):
            raise ValueError("variances must be strictly positive")
        for a in (means, variances):
            a.setflags(write=False)
        object.__setattr__(self, "space", space)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "variances", variances)

    def __setattr__(self, *_):
        raise AttributeError("GaussianFactor is immutable")

    @property
    def dim(self) -> int:
        return self.means.shape[1]


class BlockAffine:
    """Invertible affine map y_b = A_b u_b + c_b applied to one block."""

    __slots__ = ("matrix", "offset")

    def __init__(self, matrix, offset=None):
        matrix = np.asarray(matrix, dtype=float)
        d = matrix.shape[0]
        if matrix.shape != (d, d):
            raise ValueError("block matrix must be square")
        if abs(np.linalg.det(matrix)) < 1e-12:
            raise ValueError("block matrix must be invertible")
        offset = np.zeros(d) if offset is None else np.asarray(offset, dtype=float)
        if offset.shape != (d,):
            raise ValueError("offset must match block dimension")
        matrix.setflags(write=False)
        offset.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "offset", offset)

    def __setattr__(self, *_):
        raise AttributeError("BlockAffine is immutable")

    @property
    def is_identity(self) -> bool:
        d = self.matrix.shape[0]
        return np.array_equal(self.matrix, np.eye(d)) and not self.offset.any()


class _Block:
    """One coordinate block: emission table indexed by the block's concept axes.

    means has shape (*L_axes, d); variances likewise. axes is the tuple of
    world space-axis indices the block depends on (empty for the xi block).
    """

    __slots__ = ("sl", "axes", "means", "variances", "affine")

    def __init__(self, sl, axes, means, variances, affine):
        self.sl = sl
        self.axes = axes
        self.means = means
        self.variances = variances
        self.affine = affine

    @property
    def dim(self) -> int:
        return self.means.shape[-1]


def _diag_logpdf(y, mean, var):
    # y (..., d), mean/var broadcastable to y
    d = y.shape[-1]
    dev = y - mean
    return -0.5 * (d * _LOG_2PI + np.log(var).sum(axis=-1) + (dev * dev / var).sum(axis=-1))


class MixtureWorld:
    """Shared mixture machinery over block-structured Gaussian emissions."""

    def __init__(self, spaces, blocks, marginal: ConceptDistribution):
        self.spaces = tuple(spaces)
        self._blocks = list(blocks)
        if tuple(marginal.spaces) != self.spaces:
            raise ValueError("marginal must be over the world's spaces, in order")
        self.marginal = marginal
        self.m = sum(b.dim for b in self._blocks)
        self._shape = tuple(len(s) for s in self.spaces)
        self._t_cache: dict[int, list] = {}

    # -- geometry ------------------------------------------------------

    def block_slices(self) -> list[slice]:
        return [b.sl for b in self._blocks]

    def space_axis(self, space: ConceptSpace | str) -> int:
        name = space if isinstance(space, str) else space.name
        for i, s in enumerate(self.spaces):
            if s.name == name:
                return i
        raise ValueError(f"space {name!r} not among {[s.name for s in self.spaces]}")

    def space(self, name: str) -> ConceptSpace:
        return self.spaces[self.space_axis(name)]

    # -- noised component parameters ----------------------------------

    def _noised(self, schedule: Schedule, t: int):
        """Per-block noised emission parameters at timestep t.

        Returns a list of (means_t, var_t_or_None, chol_or_None, inv_or_None)
        aligned with self._blocks. Diagonal covariance stays diagonal when the
        block's affine map is the identity.
        """
        key = (schedule.digest(), t)
        hit = self._t_cache.get(key)
        if hit is not None:
            return hit
        abar = schedule.alpha_bar[schedule.check_t(t)]
        sq = math.sqrt(abar)
        out = []
        for b in self._blocks:
            if b.affine is None:
                mean_t = sq * b.means
                var_t = abar * b.variances + (1.0 - abar)
                out.append((mean_t, var_t, None, None))
            else:
                A, c = b.affine.matrix, b.affine.offset
                mean_t = sq * (b.means @ A.T + c)
                # cov_t = abar * A diag(v) A^T + (1 - abar) I, per component
                flat_v = b.variances.reshape(-1, b.dim)
                covs = abar * np.einsum("ij,kj,lj->kil", A, flat_v, A) + (
                    1.0 - abar
                ) * np.eye(b.dim)
                chols = np.linalg.cholesky(covs)
                invs = np.linalg.inv(covs)
                shape = b.variances.shape[:-1]
                out.append(
                    (
                        mean_t,
                        None,
                        chols.reshape(*shape, b.dim, b.dim),
                        invs.reshape(*shape, b.dim, b.dim),
                    )
                )
        self._t_cache[key] = out
        return out

    # -- per-block component log-likelihoods and scores ----------------

    def _block_eval(self, block, params, y_b):
        """Component log-densities and scores for one block.

        y_b: (n, d). Returns (logcomp (n, *L_axes), scorecomp (n, *L_axes, d)).
        """
        mean_t, var_t, chol, inv = params
        n = y_b.shape[0]
        Ls = block.means.shape[:-1]
        d = block.dim
        yb = y_b.reshape((n,) + (1,) * len(Ls) + (d,))
        if var_t is not None:
            dev = mean_t - yb  # (n, *L, d)
            logcomp = -0.5 * (
                d * _LOG_2PI + np.log(var_t).sum(axis=-1) + (dev * dev / var_t).sum(axis=-1)
            )
            scorecomp = dev / var_t
        else:
            dev = mean_t - yb
            scorecomp = np.einsum("...ij,n...j->n...i", inv, dev)
            # broadcast dev already carries the n axis; redo quadratic form
            quad = (dev * scorecomp).sum(axis=-1)
            logdet = 2.0 * np.log(
                np.diagonal(chol, axis1=-2, axis2=-1)
            ).sum(axis=-1)
            logcomp = -0.5 * (d * _LOG_2PI + logdet + quad)
        return logcomp, scorecomp

    # -- joint-path evaluation ------------------------------------------

    def _check_y(self, y):
        y = np.asarray(y, dtype=float)
        squeeze = y.ndim == 1
        if squeeze:
            y = y[None, :]
        if y.ndim != 2 or y.shape[1] != self.m:
            raise ValueError(f"y must have {self.m} coordinates, got shape {y.shape}")
        return y, squeeze

    def _aligned_weights(self, q: ConceptDistribution) -> np.ndarray:
        if set(s.name for s in q.spaces) != set(s.name for s in self.spaces):
            raise ValueError(
                f"distribution over {[s.name for s in q.spaces]} does not match "
                f"world spaces {[s.name for s in self.spaces]}"
            )
        perm = [q.space_index(s) for s in self.spaces]
        return np.transpose(q.weights, perm)

    def _joint_eval(self, q, y, t, schedule):
        """logp (n,) and score (n, m) by enumerating all concept cells."""
        n = y.shape[0]
        k = len(self.spaces)
        weights = self._aligned_weights(q)
        params = self._noised(schedule, t)
        logcells = np.zeros((n,) + self._shape)
        block_data = []
        with np.errstate(divide="ignore"):
            logw = np.log(weights)
        logcells += logw
        for b, p in zip(self._blocks, params):
            logcomp, scorecomp = self._block_eval(b, p, y[:, b.sl])
            shape = [n] + [1] * k
            for ax, L in zip(b.axes, logcomp.shape[1:]):
                shape[1 + ax] = L
            logcells = logcells + logcomp.reshape(shape)
            block_data.append((b, scorecomp))
        axes = tuple(range(1, k + 1))
        logp = logsumexp(logcells, axis=axes)
        post = np.exp(logcells - logp.reshape((n,) + (1,) * k))
        score = np.empty((n, self.m))
        for b, scorecomp in block_data:
            if not b.axes:
                score[:, b.sl] = scorecomp.reshape(n, b.dim)
                continue
            keep = tuple(1 + ax for ax in b.axes)
            drop = tuple(ax for ax in axes if ax not in keep)
            pm = post.sum(axis=drop) if drop else post
            flat_pm = pm.reshape(n, -1)
            flat_sc = scorecomp.reshape(n, -1, b.dim)
            score[:, b.sl] = np.einsum("nc,ncd->nd", flat_pm, flat_sc)
        return logp, score

    def _eval(self, q, y, t, schedule):
        return self._joint_eval(q, y, t, schedule)

    # -- public operations ----------------------------------------------

    def log_density(self, q: ConceptDistribution, y, t: int, schedule: Schedule):
        y, squeeze = self._check_y(y)
        logp, _ = self._eval(q, y, t, schedule)
        return float(logp[0]) if squeeze else logp

    def score(self, q: ConceptDistribution, y, t: int, schedule: Schedule):
        y, squeeze = self._check_y(y)
        _, s = self._eval(q, y, t, schedule)
        return s[0] if squeeze else s

    def posterior_batch(
        self,
        y,
        t: int,
        space: ConceptSpace | str,
        q_prior: ConceptDistribution,
        schedule: Schedule,
    ) -> np.ndarray:
        """Bayes posterior over ``space`` values given Y_t = y; (n, L)."""
        y, squeeze = self._check_y(y)
        ax = self.space_axis(space)
        n = y.shape[0]
        k = len(self.spaces)
        weights = self._aligned_weights(q_prior)
        params = self._noised(schedule, t)
        logcells = np.zeros((n,) + self._shape)
        with np.errstate(divide="ignore"):
            logcells += np.log(weights)
        for b, p in zip(self._blocks, params):
            logcomp, _ = self._block_eval(b, p, y[:, b.sl])
            shape = [n] + [1] * k
            for a, L in zip(b.axes, logcomp.shape[1:]):
                shape[1 + a] = L
            logcells = logcells + logcomp.reshape(shape)
        drop = tuple(1 + j for j in range(k) if j != ax)
        logmarg = logsumexp(logcells, axis=drop) if drop else logcells
        logmarg = logmarg - logsumexp(logmarg, axis=1, keepdims=True)
        post = np.exp(logmarg)
        return post[0] if squeeze else post

    def posterior(self, y, t, space, q_prior, schedule) -> ConceptDistribution:
        y = np.asarray(y, dtype=float)
        if y.ndim != 1:
            raise ValueError("posterior takes a single point; use posterior_batch")
        sp = self.space(space if isinstance(space, str) else space.name)
        p = self.posterior_batch(y, t, sp, q_prior, schedule)
        p = p / p.sum()
        return ConceptDistribution.from_marginals([sp], [p])

    def sample_ground_truth(self, q: ConceptDistribution, n: int, seed: int) -> np.ndarray:
        """Ancestral samples from the noiseless world; deterministic per seed."""
        if n < 1:
            raise ValueError("n must be >= 1")
        rng = np.random.default_rng(seed)
        weights = self._aligned_weights(q)
        flat = weights.reshape(-1)
        cells = rng.choice(flat.size, size=n, p=flat / flat.sum())
        idx = np.unravel_index(cells, self._shape)
        y = np.empty((n, self.m))
        for b in self._blocks:
            if b.axes:
                sel = tuple(idx[ax] for ax in b.axes)
                mu = b.means[sel]
                var = b.variances[sel]
            else:
                mu = np.broadcast_to(b.means, (n, b.dim))
                var = np.broadcast_to(b.variances, (n, b.dim))
            u = mu + np.sqrt(var) * rng.standard_normal((n, b.dim))
            if b.affine is not None:
                u = u @ b.affine.matrix.T + b.affine.offset
            y[:, b.sl] = u
        return y


def _build_blocks(factor_groups, xi_variances, mixing, axis_of):
    blocks = []
    offset = 0
    for factor in factor_groups:
        d = factor.dim
        sl = slice(offset, offset + d)
        aff = mixing.get(factor.space.name) if mixing else None
        blocks.append(_Block(sl, (axis_of[factor.space.name],), factor.means, factor.variances, aff))
        offset += d
    if xi_variances is not None and xi_variances.size:
        d = xi_variances.size
        sl = slice(offset, offset + d)
        aff = mixing.get("xi") if mixing else None
        blocks.append(_Block(sl, (), np.zeros(d), xi_variances, aff))
        offset += d
    return blocks


class SeparableWorld(MixtureWorld):
    """Causally separable world: each block's emission depends on one concept.

    Isotropic noising and the block-diagonal affine map preserve separability
    at every timestep, so the blockwise factorization is exact for
    product-form concept distributions at all t.
    """

    def __init__(
        self,
        z_factors,
        w_factors,
        xi_variances=None,
        marginal: ConceptDistribution = None,
        mixing: dict[str, BlockAffine] | None = None,
    ):
        z_factors = tuple(z_factors)
        w_factors = tuple(w_factors)
        spaces = tuple(f.space for f in z_factors) + tuple(f.space for f in w_factors)
        xi_variances = (
            np.asarray(xi_variances, dtype=float) if xi_variances is not None else np.zeros(0)
        )
        if np.any(xi_variances <= 0) and xi_variances.size:
            raise ValueError("xi variances must be strictly positive")
        axis_of = {s.name: i for i, s in enumerate(spaces)}
        blocks = _build_blocks(z_factors + w_factors, xi_variances, mixing, axis_of)
        if marginal is None:
            raise ValueError("a marginal concept distribution is required")
        super().__init__(spaces, blocks, marginal)
        self.z_factors = z_factors
        self.w_factors = w_factors
        self.xi_variances = xi_variances
        self.dim_z = sum(f.dim for f in z_factors)
        self.dim_w = sum(f.dim for f in w_factors)
        self.dim_xi = int(xi_variances.size)

    @property
    def z_slice(self) -> slice:
        return slice(0, self.dim_z)

    @property
    def w_slice(self) -> slice:
        return slice(self.dim_z, self.dim_z + self.dim_w)

    @property
    def xi_slice(self) -> slice:
        return slice(self.dim_z + self.dim_w, self.m)

    def _eval(self, q, y, t, schedule):
        # Blockwise path for product-form q: blocks are independent, so the
        # density factorizes and off-concept blocks are bitwise identical
        # across distributions sharing the other marginals.
        if q.is_product and set(s.name for s in q.spaces) == set(
            s.name for s in self.spaces
        ):
            return self._blockwise_eval(q, y, t, schedule)
        return self._joint_eval(q, y, t, schedule)

    def _blockwise_eval(self, q, y, t, schedule):
        n = y.shape[0]
        params = self._noised(schedule, t)
        logp = np.zeros(n)
        score = np.empty((n, self.m))
        for b, p in zip(self._blocks, params):
            logcomp, scorecomp = self._block_eval(b, p, y[:, b.sl])
            if not b.axes:
                logp += logcomp.reshape(n)
                score[:, b.sl] = scorecomp.reshape(n, b.dim)
                continue
            marg = q.marginal(self.spaces[b.axes[0]].name)
            with np.errstate(divide="ignore"):
                logmix = logcomp + np.log(marg)
            lp = logsumexp(logmix, axis=1)
            post = np.exp(logmix - lp[:, None])
            logp += lp
            score[:, b.sl] = np.einsum("nl,nld->nd", post, scorecomp)
        return logp, score


class InteractionWorld(MixtureWorld):
    """Non-separable world: the Z-block emission mean depends on (z, w).

    Used only to demonstrate how projection editing degrades when causal
    separability fails. Exactly one z space and one w space.
    """

    def __init__(
        self,
        z_space: ConceptSpace,
        w_space: ConceptSpace,
        z_means,
        z_variances,
        w_means,
        w_variances,
        xi_variances=None,
        marginal: ConceptDistribution = None,
    ):
        z_means = np.asarray(z_means, dtype=float)
        z_variances = np.asarray(z_variances, dtype=float)
        Lz, Lw = len(z_space), len(w_space)
        if z_means.shape[:2] != (Lz, Lw):
            raise ValueError(f"z_means must be ({Lz}, {Lw}, d_z), got {z_means.shape}")
        if z_variances.shape != z_means.shape:
            raise ValueError("z_variances must match z_means shape")
        if np.any(z_variances <= 0):
            raise ValueError("variances must be strictly positive")
        w_factor = GaussianFactor(w_space, w_means, w_variances)
        xi_variances = (
            np.asarray(xi_variances, dtype=float) if xi_variances is not None else np.zeros(0)
        )
        dz = z_means.shape[2]
        blocks = [_Block(slice(0, dz), (0, 1), z_means, z_variances, None)]
        offset = dz
        dw = w_factor.dim
        blocks.append(_Block(slice(offset, offset + dw), (1,), w_factor.means, w_factor.variances, None))
        offset += dw
        if xi_variances.size:
            blocks.append(
                _Block(slice(offset, offset + xi_variances.size), (), np.zeros(xi_variances.size), xi_variances, None)
            )
            offset += xi_variances.size
        if marginal is None:
            raise ValueError("a marginal concept distribution is required")
        super().__init__((z_space, w_space), blocks, marginal)
        self.dim_z = dz
        self.dim_w = dw
        self.dim_xi = int(xi_variances.size)

    @property
    def z_slice(self) -> slice:
        return slice(0, self.dim_z)

    @property
    def w_slice(self) -> slice:
        return slice(self.dim_z, self.dim_z + self.dim_w)
