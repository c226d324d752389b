"""JSON configuration documents for concept spaces, prompt tables, and worlds.

One document bundles the spaces, the generative world, and the prompt
bindings so that a single file fully specifies an experiment's ground truth.
Round-tripping load -> dump -> load is value-identical.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from conceptlab.concepts import (
    EMPTY_PROMPT,
    ConceptDistribution,
    ConceptSpace,
    PromptTable,
    categorical,
    delta,
    mix,
    product,
)
from conceptlab.world import (
    BlockAffine,
    GaussianFactor,
    InteractionWorld,
    MixtureWorld,
    SeparableWorld,
)


class ConfigError(ValueError):
    """Invalid configuration document; message lists every violation found."""


@dataclass
class WorldConfig:
    spaces: dict[str, ConceptSpace]
    world: MixtureWorld | None
    table: PromptTable | None
    grid: dict | None = None

    def space(self, name: str) -> ConceptSpace:
        if name not in self.spaces:
            raise ConfigError(f"unknown space {name!r}; have {sorted(self.spaces)}")
        return self.spaces[name]


# -- distribution specs -------------------------------------------------


def parse_dist(spec: dict, spaces: dict[str, ConceptSpace], defined: dict | None = None):
    defined = defined or {}
    kind = spec.get("type")
    if kind == "delta":
        return delta(_space(spaces, spec["space"]), spec["value"])
    if kind == "categorical":
        return categorical(_space(spaces, spec["space"]), spec["weights"])
    if kind == "product":
        parts = [parse_dist(s, spaces, defined) for s in spec["of"]]
        out = parts[0]
        for part in parts[1:]:
            out = product(out, part)
        return out
    if kind == "mix":
        comps = [(float(w), parse_dist(s, spaces, defined)) for w, s in spec["components"]]
        return mix(comps)
    if kind == "table":
        sp = [_space(spaces, name) for name in spec["spaces"]]
        return ConceptDistribution(sp, np.asarray(spec["weights"], dtype=float))
    if kind == "ref":
        name = spec["prompt"]
        if name not in defined:
            raise ConfigError(f"ref to prompt {name!r} before it is defined")
        return defined[name]
    raise ConfigError(f"unknown distribution type {kind!r}")


def dump_dist(q: ConceptDistribution) -> dict:
    if q.is_product:
        if len(q.spaces) == 1:
            return {
                "type": "categorical",
                "space": q.spaces[0].name,
                "weights": q.factors[0].tolist(),
            }
        return {
            "type": "product",
            "of": [
                {"type": "categorical", "space": s.name, "weights": f.tolist()}
                for s, f in zip(q.spaces, q.factors)
            ],
        }
    return {
        "type": "table",
        "spaces": [s.name for s in q.spaces],
        "weights": q.weights.tolist(),
    }


def _space(spaces: dict[str, ConceptSpace], name: str) -> ConceptSpace:
    if name not in spaces:
        raise ConfigError(f"unknown space {name!r}; have {sorted(spaces)}")
    return spaces[name]


# -- worlds --------------------------------------------------------------


def _parse_factor(d: dict, spaces) -> GaussianFactor:
    return GaussianFactor(_space(spaces, d["space"]), d["means"], d["variances"])


def _dump_factor(f: GaussianFactor) -> dict:
    return {
        "space": f.space.name,
        "means": f.means.tolist(),
        "variances": f.variances.tolist(),
    }


def _parse_mixing(d: dict | None) -> dict[str, BlockAffine] | None:
    if not d:
        return None
    return {
        name: BlockAffine(spec["matrix"], spec.get("offset")) for name, spec in d.items()
    }


def parse_world(spec: dict, spaces: dict[str, ConceptSpace]) -> MixtureWorld:
    kind = spec.get("kind")
    marginal = parse_dist(spec["marginal"], spaces)
    xi = spec.get("xi", {}).get("variances")
    if kind == "separable":
        return SeparableWorld(
            z_factors=[_parse_factor(d, spaces) for d in spec["z_factors"]],
            w_factors=[_parse_factor(d, spaces) for d in spec.get("w_factors", [])],
            xi_variances=xi,
            marginal=marginal,
            mixing=_parse_mixing(spec.get("mixing")),
        )
    if kind == "interaction":
        return InteractionWorld(
            z_space=_space(spaces, spec["z_space"]),
            w_space=_space(spaces, spec["w_space"]),
            z_means=spec["z_means"],
            z_variances=spec["z_variances"],
            w_means=spec["w_means"],
            w_variances=spec["w_variances"],
            xi_variances=xi,
            marginal=marginal,
        )
    raise ConfigError(f"unknown world kind {kind!r}")


def dump_world(world: MixtureWorld) -> dict:
    if isinstance(world, SeparableWorld):
        out = {
            "kind": "separable",
            "z_factors": [_dump_factor(f) for f in world.z_factors],
            "w_factors": [_dump_factor(f) for f in world.w_factors],
            "marginal": dump_dist(world.marginal),
        }
        if world.dim_xi:
            out["xi"] = {"variances": world.xi_variances.tolist()}
        mixing = {}
        for f, b in zip(
            world.z_factors + world.w_factors, world._blocks[: len(world.z_factors) + len(world.w_factors)]
        ):
            if b.affine is not None:
                mixing[f.space.name] = {
                    "matrix": b.affine.matrix.tolist(),
                    "offset": b.affine.offset.tolist(),
                }
        if world.dim_xi and world._blocks[-1].affine is not None:
            mixing["xi"] = {
                "matrix": world._blocks[-1].affine.matrix.tolist(),
                "offset": world._blocks[-1].affine.offset.tolist(),
            }
        if mixing:
            out["mixing"] = mixing
        return out
    if isinstance(world, InteractionWorld):
        zb, wb = world._blocks[0], world._blocks[1]
        out = {
            "kind": "interaction",
            "z_space": world.spaces[0].name,
            "w_space": world.spaces[1].name,
            "z_means": zb.means.tolist(),
            "z_variances": zb.variances.tolist(),
            "w_means": wb.means.tolist(),
            "w_variances": wb.variances.tolist(),
            "marginal": dump_dist(world.marginal),
        }
        if world.dim_xi:
            out["xi"] = {"variances": world._blocks[-1].variances.tolist()}
        return out
    raise ConfigError(f"cannot dump world of type {type(world).__name__}")


# -- whole documents ------------------------------------------------------


def parse_config(doc: dict) -> WorldConfig:
    errors = []
    spaces: dict[str, ConceptSpace] = {}
    for d in doc.get("spaces", []):
        try:
            sp = ConceptSpace(d["name"], d["values"])
            if sp.name in spaces:
                errors.append(f"duplicate space {sp.name!r}")
            spaces[sp.name] = sp
        except (KeyError, ValueError) as e:
            errors.append(f"space: {e}")
    world = None
    if "world" in doc:
        try:
            world = parse_world(doc["world"], spaces)
        except (KeyError, ValueError) as e:
            errors.append(f"world: {e}")
    table = None
    if "prompts" in doc:
        entries: dict[str, ConceptDistribution] = {}
        for name, spec in doc["prompts"].items():
            try:
                if spec == {"type": "marginal"}:
                    if world is None:
                        raise ConfigError("marginal prompt requires a world")
                    entries[name] = world.marginal
                else:
                    entries[name] = parse_dist(spec, spaces, defined=entries)
            except (KeyError, ValueError) as e:
                errors.append(f"prompt {name!r}: {e}")
        if EMPTY_PROMPT not in entries:
            errors.append('prompt table must bind the reserved empty prompt ""')
        else:
            table = PromptTable(entries)
    if errors:
        raise ConfigError("invalid configuration: " + "; ".join(errors))
    return WorldConfig(spaces=spaces, world=world, table=table, grid=doc.get("grid"))


def dump_config(cfg: WorldConfig) -> dict:
    doc: dict = {
        "spaces": [
            {"name": s.name, "values": list(s.values)} for s in cfg.spaces.values()
        ]
    }
    if cfg.world is not None:
        doc["world"] = dump_world(cfg.world)
    if cfg.table is not None:
        doc["prompts"] = {
            name: dump_dist(q) for name, q in sorted(cfg.table.entries.items())
        }
    if cfg.grid is not None:
        doc["grid"] = cfg.grid
    return doc


def fixture_path(name: str) -> Path:
    """Path of a packaged fixture config (with or without .json suffix)."""
    if not name.endswith(".json"):
        name += ".json"
    return Path(resources.files("conceptlab") / "fixtures" / name)


def load_config(source: str | Path | dict) -> WorldConfig:
    if isinstance(source, dict):
        return parse_config(source)
    path = Path(source)
    if not path.exists():
        candidate = fixture_path(str(source))
        if candidate.exists():
            path = candidate
        else:
            raise ConfigError(f"config file not found: {source}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON: {e}") from None
    return parse_config(doc)
