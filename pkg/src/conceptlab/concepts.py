"""Categorical concept spaces, distributions over them, and prompt tables.

A prompt here is an opaque string key bound to a concept distribution; there
is no text parsing anywhere. The reserved empty prompt "" is always bound to
the generating world's marginal distribution.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

EMPTY_PROMPT = ""

_WEIGHT_SUM_TOL = 1e-12
_MIX_SUM_TOL = 1e-9


class PromptLookupError(KeyError):
    """Raised when a prompt name is not bound in a prompt table."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    a.setflags(write=False)
    return a


class ConceptSpace:
    """A named categorical concept with at least two distinct values."""

    __slots__ = ("name", "values")

    def __init__(self, name: str, values: Sequence[str]):
        values = tuple(values)
        if not name:
            raise ValueError("concept space needs a nonempty name")
        if len(values) < 2:
            raise ValueError(f"space {name!r} needs at least 2 values, got {len(values)}")
        if len(set(values)) != len(values):
            raise ValueError(f"space {name!r} has duplicate values")
        if any(not v for v in values):
            raise ValueError(f"space {name!r} has an empty value label")
        object.__setattr__(self, "name", name)
        object.__setattr__(self, "values", values)

    def __setattr__(self, *_):
        raise AttributeError("ConceptSpace is immutable")

    def __len__(self) -> int:
        return len(self.values)

    def index(self, value: str) -> int:
        try:
            return self.values.index(value)
        except ValueError:
            raise ValueError(
                f"value {value!r} not in space {self.name!r} (values: {list(self.values)})"
            ) from None

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, ConceptSpace)
            and self.name == other.name
            and self.values == other.values
        )

    def __hash__(self) -> int:
        return hash((self.name, self.values))

    def __repr__(self) -> str:
        return f"ConceptSpace({self.name!r}, {list(self.values)!r})"


class ConceptDistribution:
    """A probability table over the product of one or more concept spaces.

    Distributions built as products of per-space marginals remember those
    marginals (``factors``), so marginalization and blockwise score
    evaluation can recover them exactly.
    """

    __slots__ = ("spaces", "weights", "factors")

    def __init__(
        self,
        spaces: Sequence[ConceptSpace],
        weights: np.ndarray,
        _factors: tuple[np.ndarray, ...] | None = None,
    ):
        spaces = tuple(spaces)
        if not spaces:
            raise ValueError("need at least one concept space")
        names = [s.name for s in spaces]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate space names: {names}")
        shape = tuple(len(s) for s in spaces)
        weights = np.asarray(weights, dtype=float)
        if weights.shape != shape:
            raise ValueError(f"weights shape {weights.shape} != space shape {shape}")
        if np.any(weights < 0):
            raise ValueError("weights must be nonnegative")
        total = float(weights.sum())
        if abs(total - 1.0) > _WEIGHT_SUM_TOL:
            raise ValueError(f"weights sum to {total!r}, not 1 within {_WEIGHT_SUM_TOL}")
        if _factors is not None:
            _factors = tuple(_readonly(f) for f in _factors)
            if len(_factors) != len(spaces):
                raise ValueError("one marginal per space required")
        object.__setattr__(self, "spaces", spaces)
        object.__setattr__(self, "weights", _readonly(weights))
        object.__setattr__(self, "factors", _factors)

    def __setattr__(self, *_):
        raise AttributeError("ConceptDistribution is immutable")

    @classmethod
    def from_marginals(
        cls, spaces: Sequence[ConceptSpace], marginals: Sequence[np.ndarray]
    ) -> "ConceptDistribution":
        """Product-form distribution: the joint is the outer product of the
        per-space marginals and the marginals themselves are stored."""
        marginals = [np.asarray(m, dtype=float) for m in marginals]
        joint = marginals[0]
        for m in marginals[1:]:
            joint = np.multiply.outer(joint, m)
        return cls(spaces, joint, _factors=tuple(marginals))

    @property
    def is_product(self) -> bool:
        return self.factors is not None

    def space_index(self, space: ConceptSpace | str) -> int:
        name = space if isinstance(space, str) else space.name
        for i, s in enumerate(self.spaces):
            if s.name == name:
                return i
        raise ValueError(f"space {name!r} not among {[s.name for s in self.spaces]}")

    def marginal(self, space: ConceptSpace | str) -> np.ndarray:
        i = self.space_index(space)
        if self.factors is not None:
            return self.factors[i]
        axes = tuple(j for j in range(len(self.spaces)) if j != i)
        return self.weights.sum(axis=axes)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ConceptDistribution):
            return NotImplemented
        if self.spaces != other.spaces or self.is_product != other.is_product:
            return False
        if self.is_product:
            return all(
                np.array_equal(a, b) for a, b in zip(self.factors, other.factors)
            )
        return np.array_equal(self.weights, other.weights)

    def __repr__(self) -> str:
        names = [s.name for s in self.spaces]
        form = "product" if self.is_product else "joint"
        return f"ConceptDistribution(spaces={names}, form={form})"


def delta(space: ConceptSpace, value: str) -> ConceptDistribution:
    """Degenerate distribution with all mass on ``value``."""
    idx = space.index(value)
    w = np.zeros(len(space))
    w[idx] = 1.0
    return ConceptDistribution.from_marginals([space], [w])


def uniform(space: ConceptSpace) -> ConceptDistribution:
    w = np.full(len(space), 1.0 / len(space))
    return ConceptDistribution.from_marginals([space], [w])


def categorical(space: ConceptSpace, weights: Sequence[float]) -> ConceptDistribution:
    return ConceptDistribution.from_marginals([space], [np.asarray(weights, dtype=float)])


def product(qz: ConceptDistribution, qw: ConceptDistribution) -> ConceptDistribution:
    """Joint distribution over disjoint spaces with the inputs as exact marginals."""
    z_names = {s.name for s in qz.spaces}
    overlap = z_names.intersection(s.name for s in qw.spaces)
    if overlap:
        raise ValueError(f"spaces overlap: {sorted(overlap)}")
    spaces = qz.spaces + qw.spaces
    if qz.is_product and qw.is_product:
        return ConceptDistribution.from_marginals(spaces, qz.factors + qw.factors)
    joint = np.multiply.outer(qz.weights, qw.weights)
    return ConceptDistribution(spaces, joint)


def mix(components: Iterable[tuple[float, ConceptDistribution]]) -> ConceptDistribution:
    """Convex combination of distributions over identical spaces."""
    components = list(components)
    if not components:
        raise ValueError("mix needs at least one component")
    weights = np.array([w for w, _ in components], dtype=float)
    if np.any(weights < 0):
        raise ValueError("mixture weights must be nonnegative")
    total = float(weights.sum())
    if abs(total - 1.0) > _MIX_SUM_TOL:
        raise ValueError(f"mixture weights sum to {total!r}, not 1 within {_MIX_SUM_TOL}")
    spaces = components[0][1].spaces
    for _, q in components[1:]:
        if q.spaces != spaces:
            raise ValueError("all mixture components must share the same spaces")
    if len(components) == 1:
        return components[0][1]
    joint = sum(w * q.weights for w, q in components)
    if len(spaces) == 1:
        return ConceptDistribution.from_marginals(spaces, [joint])
    return ConceptDistribution(spaces, joint)


class PromptTable:
    """Binds prompt names to concept distributions; "" is always present."""

    __slots__ = ("entries",)

    def __init__(self, entries: dict[str, ConceptDistribution]):
        if EMPTY_PROMPT not in entries:
            raise ValueError('prompt table must bind the reserved empty prompt ""')
        object.__setattr__(self, "entries", dict(entries))

    def __setattr__(self, *_):
        raise AttributeError("PromptTable is immutable")

    def resolve(self, name: str) -> ConceptDistribution:
        try:
            return self.entries[name]
        except KeyError:
            available = sorted(repr(k) for k in self.entries)
            raise PromptLookupError(
                f"unknown prompt {name!r}; available: {', '.join(available)}"
            ) from None

    def names(self) -> list[str]:
        return sorted(self.entries)

    def __contains__(self, name: str) -> bool:
        return name in self.entries


def resolve(table: PromptTable, name: str) -> ConceptDistribution:
    return table.resolve(name)
