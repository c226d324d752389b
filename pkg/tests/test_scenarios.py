import json

import numpy as np
import pytest

from conceptlab.concepts import categorical, delta
from conceptlab.config import ConfigError, load_config
from conceptlab.scenarios import (
    leakage,
    load_scenario,
    map_histogram,
    rank_report,
    run_scenario,
    tv_distance,
)
from conceptlab.schedule import make_schedule

MINI_SCENARIO = {
    "name": "mini",
    "kind": "edit",
    "world": "fixture_a.json",
    "schedule": {"T": 60, "beta_min": 1e-3, "beta_max": 0.2},
    "n": 40,
    "seed": 3,
    "plan": {
        "method": "projection",
        "x_orig": "a male mathematician",
        "new_mixture": [[0.5, "a male mathematician"], [0.5, "a female mathematician"]],
        "spanning_prompts": ["a man", "a woman"],
    },
    "metrics": {
        "target_space": "sex",
        "off_space": "profession",
        "intended": {"type": "categorical", "space": "sex", "weights": [0.5, 0.5]},
    },
}


def test_tv_distance_extremes():
    assert tv_distance([0.5, 0.5], [0.5, 0.5]) == 0.0
    assert tv_distance([1.0, 0.0], [0.0, 1.0]) == 1.0


def test_leakage_identity_and_disjoint(fixture_a, schedule_100):
    world = fixture_a.world
    samples = world.sample_ground_truth(world.marginal, 400, seed=1)
    same = leakage(
        world,
        schedule_100,
        samples,
        samples,
        "sex",
        "profession",
        map_to_dist(world, samples, "sex", schedule_100),
    )
    assert same.target_shift <= 1e-12
    assert same.off_target_leakage == 0.0
    males = world.sample_ground_truth(fixture_a.table.resolve("a man"), 200, seed=2)
    females = world.sample_ground_truth(fixture_a.table.resolve("a woman"), 200, seed=3)
    far = leakage(world, schedule_100, males, females, "sex", "profession", delta(world.spaces[0], "female"))
    assert far.target_shift >= 0.95


def map_to_dist(world, samples, space, schedule):
    hist = map_histogram(world, samples, world.space(space), schedule)
    return categorical(world.space(space), hist / hist.sum())


def test_leakage_rejects_empty(fixture_a, schedule_100):
    world = fixture_a.world
    with pytest.raises(ValueError, match="nonempty"):
        leakage(
            world,
            schedule_100,
            np.empty((0, 3)),
            np.empty((0, 3)),
            "sex",
            "profession",
            delta(world.spaces[0], "male"),
        )


def test_rank_report_structure(schedule_100):
    cfg = load_config("rank_l3")
    rep = rank_report(cfg.world, ["shape"], schedule_100, probes=6, points=8, seed=0)
    assert rep["bound"] == 2
    assert rep["within_bound"]
    assert len(rep["ranks"]) == 8
    assert rep["max_rank"] <= 2


def test_run_scenario_writes_reports(tmp_path):
    report = run_scenario(MINI_SCENARIO, tmp_path / "out")
    assert (tmp_path / "out" / "report.json").exists()
    assert (tmp_path / "out" / "report.csv").exists()
    assert (tmp_path / "out" / "manifest.json").exists()
    assert (tmp_path / "out" / "runs" / "edited" / "samples.csv").exists()
    assert (tmp_path / "out" / "runs" / "original" / "samples.csv").exists()
    assert report["version"]
    assert report["digest"]
    lk = report["results"]["edited"]["leakage"]
    assert 0.0 <= lk["target_shift"] <= 1.0
    assert 0.0 <= lk["off_target_leakage"] <= 1.0


def test_rerun_from_manifest_bit_identical(tmp_path):
    run_scenario(MINI_SCENARIO, tmp_path / "a")
    manifest = tmp_path / "a" / "manifest.json"
    run_scenario(manifest, tmp_path / "b")
    for sub in ("edited", "original"):
        a = (tmp_path / "a" / "runs" / sub / "samples.csv").read_bytes()
        b = (tmp_path / "b" / "runs" / sub / "samples.csv").read_bytes()
        assert a == b
    ra = json.loads((tmp_path / "a" / "report.json").read_text())
    rb = json.loads((tmp_path / "b" / "report.json").read_text())
    assert ra == rb


def test_invalid_scenario_lists_all_errors(tmp_path):
    bad = dict(MINI_SCENARIO, kind="edit")
    bad = json.loads(json.dumps(bad))
    del bad["name"]
    bad["plan"] = {"method": "projection", "x_orig": "a man"}  # no target, no spanning
    bad["schedule"] = {"T": 0}
    with pytest.raises(ConfigError) as exc:
        load_scenario(bad)
    msg = str(exc.value)
    assert "name" in msg
    assert "plan" in msg
    assert "schedule.T" in msg


def test_invalid_scenario_writes_nothing(tmp_path):
    bad = json.loads(json.dumps(MINI_SCENARIO))
    bad["plan"]["method"] = "teleport"
    out = tmp_path / "out"
    with pytest.raises(ConfigError):
        run_scenario(bad, out)
    assert not out.exists()


def test_unknown_world_reference():
    bad = json.loads(json.dumps(MINI_SCENARIO))
    bad["world"] = "no_such_world.json"
    with pytest.raises(ConfigError, match="no_such_world"):
        load_scenario(bad)


def test_shipped_scenarios_validate():
    for name in (
        "mixture-sex.json",
        "style-analog-edit.json",
        "non-prompted-edit.json",
        "method-comparison.json",
        "separability-failure.json",
        "mask-recovery.json",
        "rank-sweep.json",
    ):
        doc = load_scenario(name)
        assert doc["name"] == name.removesuffix(".json")


def test_mask_scenario_reports_iou(tmp_path):
    doc = load_scenario("mask-recovery.json")
    report = run_scenario(doc, tmp_path / "mask")
    cases = {c["t"]: c for c in report["results"]}
    assert cases[0]["iou"] == 1.0
    assert cases[500]["iou"] >= 0.9


def test_compare_scenario_runs_all_plans(tmp_path):
    doc = load_scenario("method-comparison.json")
    doc["n"] = 30
    doc["schedule"] = {"T": 40, "beta_min": 1e-3, "beta_max": 0.25}
    report = run_scenario(doc, tmp_path / "cmp")
    assert set(report["results"]) == {"projection", "composition", "negative"}
    for sub in ("projection", "composition", "negative", "original"):
        assert (tmp_path / "cmp" / "runs" / sub / "samples.csv").exists()
