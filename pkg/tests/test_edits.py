import numpy as np
import pytest

from conceptlab.edits import (
    EditPlan,
    MaskParams,
    composed_epsilon,
    edited_epsilon,
    mixture_target_epsilon,
    negative_epsilon,
)


def plan_projection(**kw):
    defaults = dict(
        method="projection",
        x_orig="a male mathematician",
        x_new="a female mathematician",
        spanning_prompts=("a man", "a woman"),
    )
    defaults.update(kw)
    return EditPlan(**defaults)


def test_plan_validation():
    with pytest.raises(ValueError, match="method"):
        EditPlan(method="teleport", x_orig="")
    with pytest.raises(ValueError, match="spanning"):
        EditPlan(method="projection", x_orig="a", x_new="b")
    with pytest.raises(ValueError, match="exactly one"):
        plan_projection(new_mixture=((0.5, "a"), (0.5, "b")))
    with pytest.raises(ValueError, match="x_neg"):
        EditPlan(method="negative", x_orig="a")
    with pytest.raises(ValueError, match="switch_fraction"):
        plan_projection(switch_fraction=1.0)


def test_plan_dict_roundtrip():
    plans = [
        plan_projection(),
        plan_projection(x_new=None, new_mixture=((0.5, "a"), (0.5, "b")), switch_fraction=0.2),
        EditPlan(method="composition", x_orig="x", attachments=((1.0, "y"),)),
        EditPlan(method="negative", x_orig="x", x_neg="y", strength=0.5),
        EditPlan(method="none", x_orig="x"),
        plan_projection(
            spanning_prompts=(),
            mask=MaskParams(pair=("a man", "a woman"), threshold=0.2, blur_sigma=1.0, grid_shape=(2, 2)),
        ),
    ]
    for plan in plans:
        assert EditPlan.from_dict(plan.to_dict()) == plan


def test_mixture_target_is_linear(oracle_a, rng):
    """The 50/50 nurse mixture epsilon equals the arithmetic average."""
    y = rng.normal(size=(4, 3))
    t = 30
    mixture = mixture_target_epsilon(
        oracle_a, [(0.5, "a male nurse"), (0.5, "a female nurse")], y, t
    )
    direct = 0.5 * oracle_a.epsilon(y, t, "a male nurse") + 0.5 * oracle_a.epsilon(
        y, t, "a female nurse"
    )
    assert np.max(np.abs(mixture - direct)) <= 1e-12


def test_mixture_weights_validated(oracle_a):
    with pytest.raises(ValueError, match="sum"):
        mixture_target_epsilon(oracle_a, [(0.7, "a man"), (0.5, "a woman")], np.zeros(3), 10)


def test_projection_preserves_w_block(oracle_a, rng):
    """The profession/noise coordinates of the edited field equal the
    original's exactly: the estimated sex subspace is the sex coordinate."""
    plan = plan_projection()
    for t in (1, 40, 100):
        y = rng.normal(size=(8, 3))
        edited = edited_epsilon(oracle_a, plan, y, t)
        orig = oracle_a.epsilon(y, t, plan.x_orig)
        assert np.max(np.abs(edited[:, 1:] - orig[:, 1:])) <= 1e-8
        # and the sex coordinate takes the new prompt's value
        new = oracle_a.epsilon(y, t, plan.x_new)
        assert np.max(np.abs(edited[:, 0] - new[:, 0])) <= 1e-8


def test_projection_with_spanning_pair_equals_full_conditioning(oracle_a, rng):
    """When the spanning prompts are exactly (orig, new), the rank-1 edit
    collapses to eps_new: P applied to its own spanning difference is identity."""
    plan = EditPlan(
        method="projection",
        x_orig="a man",
        x_new="a woman",
        spanning_prompts=("a man", "a woman"),
    )
    y = rng.normal(size=(5, 3))
    edited = edited_epsilon(oracle_a, plan, y, 25)
    assert np.allclose(edited, oracle_a.epsilon(y, 25, "a woman"), atol=1e-10)


def test_projection_idempotent(oracle_a, rng):
    """Editing an already-edited field changes nothing: same projector, and
    the target component is already in place."""
    plan = plan_projection()
    y = rng.normal(size=(4, 3))
    once = edited_epsilon(oracle_a, plan, y, 40)

    class Edited:
        m, T = oracle_a.m, oracle_a.T
        table = oracle_a.table

        def epsilon(self, yy, tt, prompt):
            if prompt == plan.x_orig:
                return edited_epsilon(oracle_a, plan, yy, tt)
            return oracle_a.epsilon(yy, tt, prompt)

        def epsilon_many(self, yy, tt, prompts):
            return np.stack([self.epsilon(yy, tt, p) for p in prompts], axis=-1)

    twice = edited_epsilon(Edited(), plan, y, 40)
    assert np.allclose(once, twice, atol=1e-10)


def test_composition_shifts_both_blocks(oracle_a, rng):
    """Attaching a prompt that carries profession content moves the
    profession coordinate too; that is the leakage the projection avoids."""
    y = rng.normal(size=(6, 3))
    t = 30
    out = composed_epsilon(oracle_a, "a male mathematician", [(1.0, "a feminine portrait")], y, t)
    orig = oracle_a.epsilon(y, t, "a male mathematician")
    assert np.max(np.abs(out[:, 0] - orig[:, 0])) > 1e-3  # sex moved
    assert np.max(np.abs(out[:, 1] - orig[:, 1])) > 1e-3  # profession moved too


def test_composition_without_attachments_is_identity(oracle_a, rng):
    y = rng.normal(size=3)
    assert np.array_equal(
        composed_epsilon(oracle_a, "a man", [], y, 10), oracle_a.epsilon(y, 10, "a man")
    )


def test_negative_strength_zero_is_identity(oracle_a, rng):
    y = rng.normal(size=3)
    out = negative_epsilon(oracle_a, "a man", "a woman", 0.0, y, 10)
    assert np.array_equal(out, oracle_a.epsilon(y, 10, "a man"))


def test_negative_moves_against_unwanted_prompt(oracle_a, rng):
    y = rng.normal(size=(5, 3))
    t = 20
    out = negative_epsilon(oracle_a, "a person", "a man", 1.0, y, t)
    orig = oracle_a.epsilon(y, t, "a person")
    base = oracle_a.epsilon(y, t, "")
    man = oracle_a.epsilon(y, t, "a man")
    assert np.allclose(out, orig - (man - base), atol=1e-14)


def test_mask_edit_swaps_selected_coordinates(schedule_100, rng):
    from conceptlab.config import load_config
    from conceptlab.oracle import AnalyticOracle

    cfg = load_config("grid8")
    orc = AnalyticOracle(cfg.world, cfg.table, schedule_100)
    plan = EditPlan(
        method="projection",
        x_orig="subject present",
        x_new="subject absent",
        mask=MaskParams(pair=("subject present", "subject absent"), threshold=0.1),
    )
    y = cfg.world.sample_ground_truth(cfg.world.marginal, 4, 11)
    t = 50
    edited = edited_epsilon(orc, plan, y, t)
    orig = orc.epsilon(y, t, "subject present")
    new = orc.epsilon(y, t, "subject absent")
    z, w = cfg.world.z_slice, cfg.world.w_slice
    assert np.array_equal(edited[:, w], orig[:, w])
    assert np.array_equal(edited[:, z], new[:, z])


def test_zero_projector_recorded_in_warnings(oracle_a):
    plan = EditPlan(
        method="projection",
        x_orig="a man",
        x_new="a woman",
        spanning_prompts=("a man", "a man"),  # degenerate: zero difference
    )
    warnings = []
    out = edited_epsilon(oracle_a, plan, np.zeros((2, 3)), 10, warnings=warnings)
    assert warnings and warnings[0]["zero_projectors"] == 2
    assert np.allclose(out, oracle_a.epsilon(np.zeros((2, 3)), 10, "a man"))
