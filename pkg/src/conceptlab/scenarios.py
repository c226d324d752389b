"""Scenario runner: loads a scenario document, runs sampling and editing
experiments against a configured world, computes leakage/rank/mask metrics,
and persists reproducible reports."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

import conceptlab
from conceptlab.concepts import ConceptDistribution, PromptTable
from conceptlab.config import ConfigError, WorldConfig, fixture_path, load_config, parse_config
from conceptlab.edits import EditPlan
from conceptlab.oracle import AnalyticOracle, ScoreOracle
from conceptlab.sampler import RunArtifact, ddpm_sample
from conceptlab.schedule import Schedule, make_schedule
from conceptlab.subspace import delta_matrix, find_subspace_mask, numerical_rank
from conceptlab.world import MixtureWorld


@dataclass
class LeakageReport:
    target_shift: float
    off_target_leakage: float

    def to_dict(self) -> dict:
        return {
            "target_shift": self.target_shift,
            "off_target_leakage": self.off_target_leakage,
        }


def tv_distance(p: np.ndarray, q: np.ndarray) -> float:
    return float(0.5 * np.abs(np.asarray(p) - np.asarray(q)).sum())


def map_histogram(
    world: MixtureWorld, samples: np.ndarray, space, schedule: Schedule
) -> np.ndarray:
    """Empirical distribution of MAP posterior assignments at t = 0."""
    post = world.posterior_batch(samples, 0, space, world.marginal, schedule)
    L = post.shape[1]
    assigned = np.argmax(post, axis=1)
    return np.bincount(assigned, minlength=L) / len(assigned)


def leakage(
    world: MixtureWorld,
    schedule: Schedule,
    edited_samples: np.ndarray,
    original_samples: np.ndarray,
    target_space,
    off_space,
    intended_q: ConceptDistribution,
) -> LeakageReport:
    """TV shift of the target concept vs its intended distribution, and TV
    shift of the off-target concept vs the unedited run."""
    if len(edited_samples) == 0 or len(original_samples) == 0:
        raise ValueError("leakage needs nonempty sample sets")
    target = world.space(target_space if isinstance(target_space, str) else target_space.name)
    off = world.space(off_space if isinstance(off_space, str) else off_space.name)
    intended = intended_q.marginal(target.name)
    h_target = map_histogram(world, edited_samples, target, schedule)
    h_off_edit = map_histogram(world, edited_samples, off, schedule)
    h_off_orig = map_histogram(world, original_samples, off, schedule)
    return LeakageReport(
        target_shift=tv_distance(h_target, intended),
        off_target_leakage=tv_distance(h_off_edit, h_off_orig),
    )


def rank_report(
    world: MixtureWorld,
    target_spaces: list[str],
    schedule: Schedule,
    probes: int = 8,
    points: int = 12,
    seed: int = 0,
) -> dict:
    """Numerical ranks of the spanning-prompt difference matrix at random
    (y, t) points, using random target-concept distributions as probes."""
    rng = np.random.default_rng(seed)
    target_axes = [world.space_axis(s) for s in target_spaces]
    other = [s for i, s in enumerate(world.spaces) if i not in target_axes]
    t_shape = tuple(len(world.spaces[i]) for i in target_axes)
    # composed bound sum(L_k - 1); for a single target space this is L - 1
    bound = int(sum(L - 1 for L in t_shape))

    def probe_dist(joint_target: np.ndarray) -> ConceptDistribution:
        weights = np.ones(world._shape)
        shape = [1] * len(world.spaces)
        for ax, L in zip(target_axes, t_shape):
            shape[ax] = L
        weights = weights * joint_target.reshape(shape)
        for i, s in enumerate(world.spaces):
            if i in target_axes:
                continue
            marg = world.marginal.marginal(s.name)
            sh = [1] * len(world.spaces)
            sh[i] = len(s)
            weights = weights * np.asarray(marg).reshape(sh)
        weights = weights / weights.sum()
        return ConceptDistribution(world.spaces, weights)

    cells = int(np.prod(t_shape))
    entries = {"": world.marginal}
    names = []
    for j in range(probes + 1):
        q_t = rng.dirichlet(np.ones(cells)).reshape(t_shape)
        name = f"probe_{j}"
        entries[name] = probe_dist(q_t)
        names.append(name)
    table = PromptTable(entries)
    oracle = AnalyticOracle(world, table, schedule)

    # probe at forward-noised data points; far tail points underflow the
    # posterior differences to rounding noise and carry no rank information
    y0 = world.sample_ground_truth(world.marginal, points, int(rng.integers(2**31)))
    ranks = []
    for j in range(points):
        t = int(rng.integers(1, schedule.T + 1))
        abar = schedule.alpha_bar[t]
        y = np.sqrt(abar) * y0[j] + np.sqrt(1 - abar) * rng.standard_normal(world.m)
        dm = delta_matrix(oracle, y, t, names)
        ranks.append({"t": t, "rank": numerical_rank(dm.columns)})
    rank_values = [r["rank"] for r in ranks]
    return {
        "target_spaces": list(target_spaces),
        "bound": bound,
        "probes": probes,
        "points": points,
        "ranks": ranks,
        "max_rank": max(rank_values),
        "frac_at_bound": float(np.mean([r == bound for r in rank_values])),
        "within_bound": max(rank_values) <= bound,
    }


# -- scenario documents ---------------------------------------------------


def _resolve_world_doc(ref, base_dir: Path | None) -> dict:
    if isinstance(ref, dict):
        return ref
    path = Path(ref)
    if not path.is_absolute():
        if base_dir is not None and (base_dir / path).exists():
            path = base_dir / path
        elif not path.exists():
            candidate = fixture_path(str(ref))
            if candidate.exists():
                path = candidate
    if not path.exists():
        raise ConfigError(f"world config not found: {ref}")
    return json.loads(path.read_text())


def load_scenario(source: str | Path | dict) -> dict:
    """Parse a scenario document and inline world configs; returns the
    resolved document (pure data, reproducible from the manifest)."""
    if isinstance(source, dict):
        doc = dict(source)
        base_dir = None
    else:
        path = Path(source)
        if not path.exists():
            candidate = fixture_path(str(Path("scenarios") / str(source)))
            if candidate.exists():
                path = candidate
            else:
                raise ConfigError(f"scenario file not found: {source}")
        doc = json.loads(path.read_text())
        base_dir = path.parent
        if "scenario" in doc:  # a run manifest; re-run its embedded scenario
            return doc["scenario"]
    errors = []
    kind = doc.get("kind", "edit")
    if kind not in ("edit", "compare", "separability", "rank", "mask"):
        errors.append(f"unknown scenario kind {kind!r}")
    if "name" not in doc:
        errors.append("missing scenario name")
    if kind in ("edit", "compare", "mask") and "world" not in doc:
        errors.append("missing world reference")
    try:
        if kind == "separability":
            doc["worlds"] = {
                label: _resolve_world_doc(ref, base_dir)
                for label, ref in doc.get("worlds", {}).items()
            }
            if set(doc["worlds"]) != {"interaction", "separable"}:
                errors.append('separability scenario needs worlds {"interaction", "separable"}')
        elif kind == "rank":
            for tgt in doc.get("targets", []):
                tgt["world"] = _resolve_world_doc(tgt["world"], base_dir)
            if not doc.get("targets"):
                errors.append("rank scenario needs a nonempty targets list")
        else:
            doc["world"] = _resolve_world_doc(doc["world"], base_dir)
    except (ConfigError, KeyError) as e:
        errors.append(str(e))
    # validate embedded configs and plans eagerly so failures precede any output
    def check_world(world_doc, label=""):
        try:
            return parse_config(world_doc)
        except ConfigError as e:
            errors.append(f"world {label}: {e}")
            return None

    cfgs = {}
    if not errors:
        if kind == "separability":
            for label, wd in doc["worlds"].items():
                cfgs[label] = check_world(wd, label)
        elif kind == "rank":
            for i, tgt in enumerate(doc["targets"]):
                cfgs[i] = check_world(tgt["world"], f"targets[{i}]")
        else:
            cfgs["world"] = check_world(doc["world"])
    plans = {}
    if kind == "edit" and "plan" in doc:
        plans["edit"] = doc["plan"]
    if kind == "compare":
        plans.update(doc.get("plans", {}))
        if not plans:
            errors.append("compare scenario needs a plans map")
    if kind == "separability" and "plan" in doc:
        plans["edit"] = doc["plan"]
    for label, plan_doc in plans.items():
        try:
            EditPlan.from_dict(plan_doc)
        except (KeyError, ValueError) as e:
            errors.append(f"plan {label!r}: {e}")
    if kind in ("edit", "separability") and "plan" not in doc:
        errors.append("missing plan")
    sched = doc.get("schedule", {})
    if not isinstance(sched.get("T", 0), int) or sched.get("T", 0) < 1:
        errors.append("schedule.T must be a positive integer")
    for cfg in cfgs.values():
        if cfg is not None and cfg.world is None and kind != "rank":
            errors.append("world config must define a world")
        if cfg is not None and cfg.table is None and kind not in ("rank",):
            errors.append("world config must define a prompt table")
    if errors:
        raise ConfigError("invalid scenario: " + "; ".join(errors))
    return doc


def _schedule_from(doc: dict) -> Schedule:
    sched = doc.get("schedule", {})
    return make_schedule(
        sched.get("T", 1000), sched.get("beta_min", 1e-4), sched.get("beta_max", 0.02)
    )


def scenario_digest(doc: dict) -> str:
    payload = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode()).hexdigest()


def _make_oracle(cfg: WorldConfig, schedule: Schedule, oracle_kind: str, remote) -> ScoreOracle:
    if oracle_kind == "analytic":
        return AnalyticOracle(cfg.world, cfg.table, schedule)
    if oracle_kind == "remote":
        from conceptlab.protocol import RemoteOracle

        host, port = remote
        client = RemoteOracle(host, port)
        if client.m != cfg.world.m or client.T != schedule.T:
            raise ConfigError(
                f"remote oracle (m={client.m}, T={client.T}) does not match "
                f"world (m={cfg.world.m}, T={schedule.T})"
            )
        return client
    raise ConfigError(f"unknown oracle kind {oracle_kind!r}")


def _run_and_save(oracle, plan_doc, schedule, w, n, seed, out: Path, label: str, threads=1):
    plan = EditPlan.from_dict(plan_doc)
    art = ddpm_sample(oracle, plan, schedule, w=w, n=n, seed=seed, threads=threads)
    art.save(out / "runs" / label)
    return art


def _leakage_metrics(doc, cfg, schedule, edited: RunArtifact, original: RunArtifact):
    metrics = doc.get("metrics")
    if not metrics:
        return None
    intended = None
    if "intended" in metrics:
        from conceptlab.config import parse_dist

        intended = parse_dist(metrics["intended"], cfg.spaces)
    elif "intended_prompt" in metrics:
        intended = cfg.table.resolve(metrics["intended_prompt"])
    else:
        raise ConfigError("metrics need intended or intended_prompt")
    rep = leakage(
        cfg.world,
        schedule,
        edited.samples,
        original.samples,
        metrics["target_space"],
        metrics["off_space"],
        intended,
    )
    return rep.to_dict()


def _baseline_doc(doc: dict) -> dict:
    if "baseline_plan" in doc:
        return doc["baseline_plan"]
    plan = doc.get("plan") or next(iter(doc["plans"].values()))
    return {"method": "none", "x_orig": plan["x_orig"]}


def run_scenario(
    source,
    out_dir: str | Path,
    seed: int | None = None,
    oracle: str = "analytic",
    remote: tuple[str, int] | None = None,
    threads: int = 1,
) -> dict:
    """Run a scenario document end to end; writes runs + report under out_dir."""
    doc = load_scenario(source)
    kind = doc.get("kind", "edit")
    schedule = _schedule_from(doc)
    seed = doc.get("seed", 0) if seed is None else seed
    n = doc.get("n", 1000)
    w = doc.get("guidance", 1.0)
    out = Path(out_dir)
    report: dict = {
        "name": doc["name"],
        "kind": kind,
        "seed": seed,
        "digest": scenario_digest(doc),
        "version": conceptlab.__version__,
        "warnings": [],
    }

    if kind in ("edit", "compare"):
        cfg = parse_config(doc["world"])
        orc = _make_oracle(cfg, schedule, oracle, remote)
        # baseline uses seed+1 so edited/original noise streams differ
        baseline = _run_and_save(
            orc, _baseline_doc(doc), schedule, w, n, seed + 1, out, "original", threads
        )
        plan_docs = {"edited": doc["plan"]} if kind == "edit" else doc["plans"]
        results = {}
        for label, plan_doc in plan_docs.items():
            art = _run_and_save(orc, plan_doc, schedule, w, n, seed, out, label, threads)
            entry = {"warnings": len(art.warnings)}
            lk = _leakage_metrics(doc, cfg, schedule, art, baseline)
            if lk is not None:
                entry["leakage"] = lk
            results[label] = entry
            report["warnings"].extend(art.warnings[:10])
        report["results"] = results

    elif kind == "separability":
        results = {}
        for label in ("separable", "interaction"):
            cfg = parse_config(doc["worlds"][label])
            orc = _make_oracle(cfg, schedule, oracle, remote)
            baseline = _run_and_save(
                orc, _baseline_doc(doc), schedule, w, n, seed + 1, out, f"{label}-original", threads
            )
            art = _run_and_save(orc, doc["plan"], schedule, w, n, seed, out, f"{label}-edited", threads)
            lk = _leakage_metrics(doc, cfg, schedule, art, baseline)
            results[label] = {"leakage": lk, "warnings": len(art.warnings)}
        for key in ("off_target_leakage", "target_shift"):
            sep = results["separable"]["leakage"][key]
            inter = results["interaction"]["leakage"][key]
            results[f"{key}_ratio"] = inter / max(sep, 1e-12)
        report["results"] = results

    elif kind == "rank":
        results = []
        for tgt in doc["targets"]:
            cfg = parse_config(tgt["world"])
            results.append(
                rank_report(
                    cfg.world,
                    tgt["spaces"],
                    schedule,
                    probes=tgt.get("probes", doc.get("probes", 8)),
                    points=tgt.get("points", doc.get("points", 12)),
                    seed=seed,
                )
            )
        report["results"] = results

    elif kind == "mask":
        cfg = parse_config(doc["world"])
        orc = _make_oracle(cfg, schedule, oracle, remote)
        grid = cfg.grid or {}
        world = cfg.world
        truth = np.zeros(world.m, dtype=bool)
        truth[world.z_slice] = True
        rng = np.random.default_rng(seed)
        y0 = world.sample_ground_truth(world.marginal, 1, seed)[0]
        results = []
        for case in doc["cases"]:
            t = int(case["t"])
            abar = schedule.alpha_bar[schedule.check_t(t)]
            y_t = np.sqrt(abar) * y0 + np.sqrt(1 - abar) * rng.standard_normal(world.m)
            proj = find_subspace_mask(
                orc,
                y_t,
                t,
                tuple(doc["pair"]),
                threshold=case.get("threshold", 0.1),
                blur_sigma=case.get("blur_sigma", doc.get("blur_sigma", 0.0)),
                grid_shape=tuple(grid["shape"]) if "shape" in grid else None,
                grid_order=grid.get("order", "C"),
            )
            bits = proj.mask_bits.astype(bool)
            inter = np.sum(bits & truth)
            union = np.sum(bits | truth)
            results.append(
                {
                    "t": t,
                    "threshold": case.get("threshold", 0.1),
                    "selected": int(bits.sum()),
                    "iou": float(inter / union) if union else 0.0,
                    "warning": proj.warning,
                }
            )
        report["results"] = results

    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "scenario": doc,
        "seed": seed,
        "digest": report["digest"],
        "version": report["version"],
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    (out / "report.json").write_text(json.dumps(report, indent=2) + "\n")
    _write_report_csv(out / "report.csv", report)
    return report


def _write_report_csv(path: Path, report: dict) -> None:
    rows = [["scenario", "key", "metric", "value"]]

    def walk(prefix, obj):
        if isinstance(obj, dict):
            for k, v in obj.items():
                walk(f"{prefix}.{k}" if prefix else str(k), v)
        elif isinstance(obj, list):
            for i, v in enumerate(obj):
                walk(f"{prefix}[{i}]", v)
        elif isinstance(obj, (int, float, bool)):
            key, _, metric = prefix.rpartition(".")
            rows.append([report["name"], key, metric, repr(obj)])

    walk("", report.get("results", {}))
    path.write_text("\n".join(",".join(str(c) for c in row) for row in rows) + "\n")
