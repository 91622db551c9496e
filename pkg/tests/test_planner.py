import json
from dataclasses import replace

import numpy as np
import pytest

from ctsdr.kinematics import tip_position
from ctsdr.model import JointState, default_config
from ctsdr.planner import (
    PlanCandidate,
    PlanRequest,
    UnreachableTargetError,
    plan_cost,
    plan_s_shape,
)
from ctsdr.simulator import run_scenario


def _random_reachable(rng, config):
    """Joints drawn inside the limits, and the tip they produce."""
    lo = rng.uniform(2.0, 40.0)
    li = rng.uniform(lo + 2.0, 100.0)
    rel = rng.uniform(0.0, 360.0)
    outer = rng.uniform(-180.0, 180.0)
    joints = JointState(outer_translation=lo, inner_translation=li,
                        outer_roll=outer, inner_roll=outer + rel)
    return joints, tip_position(config, joints)


# -- request and candidate plumbing --------------------------------------------


def test_plan_request_validation():
    with pytest.raises(ValueError, match="total_length"):
        PlanRequest(target=(50.0, 0.0, 0.0), total_length=0.0)
    with pytest.raises(ValueError, match="weights"):
        PlanRequest(target=(50.0, 0.0, 0.0), weight_tip=-1.0)
    with pytest.raises(ValueError, match="radius_bounds"):
        PlanRequest(target=(50.0, 0.0, 0.0), radius_bounds=(80.0, 40.0))


def test_plan_request_json_round_trip():
    req = PlanRequest(target=(60.0, 10.0, -5.0), total_length=85.0,
                      allowed_relative_rolls=None, radius_bounds=(40.0, 80.0),
                      weight_length=0.5)
    again = PlanRequest.from_json(json.dumps(req.to_json_dict()))
    assert np.array_equal(again.target, req.target)
    assert again.allowed_relative_rolls is None
    assert again.radius_bounds == (40.0, 80.0)
    assert again.weight_length == 0.5

    discrete = PlanRequest(target=(60.0, 10.0, -5.0))
    again = PlanRequest.from_json_dict(discrete.to_json_dict())
    assert again.allowed_relative_rolls == (0.0, 90.0, 180.0)


def test_candidate_derived_joints(config):
    cand = PlanCandidate(outer_translation=20.0, inner_translation=70.0,
                         outer_roll=30.0, relative_roll=180.0)
    assert cand.inner_roll == 210.0
    assert cand.total_length == 70.0
    joints = cand.joints()
    assert joints.outer_translation == 20.0
    assert joints.inner_roll == 210.0
    assert cand.apply_config(config) is config

    searched = replace(cand, precurvature_radius=60.0)
    cfg = searched.apply_config(config)
    assert cfg.outer_tube.precurvature_radius == 60.0
    assert cfg.inner_tube.precurvature_radius == 60.0


def test_plan_cost_unit_cases(config):
    cand = PlanCandidate(outer_translation=20.0, inner_translation=70.0,
                         outer_roll=0.0, relative_roll=180.0)
    tip = tip_position(config, cand.joints())

    exact = PlanRequest(target=tip, total_length=70.0)
    assert plan_cost(cand, exact, config) == pytest.approx(0.0, abs=1e-18)

    # 1 mm of tip error with matched length costs exactly 1.
    offset = PlanRequest(target=tip + np.array([0.0, 0.0, 1.0]), total_length=70.0)
    assert plan_cost(cand, offset, config) == pytest.approx(1.0, abs=1e-9)

    # 0.7 mm of channel-length error costs 0.49.
    long_req = PlanRequest(target=tip, total_length=69.3)
    assert plan_cost(cand, long_req, config) == pytest.approx(0.49, abs=1e-9)

    # Weights scale each term.
    weighted = PlanRequest(target=tip + np.array([0.0, 0.0, 1.0]), total_length=69.3,
                           weight_tip=2.0, weight_length=10.0)
    assert plan_cost(cand, weighted, config) == pytest.approx(2.0 + 4.9, abs=1e-9)


# -- search ---------------------------------------------------------------------


def test_batched_tips_match_scalar_kinematics(config):
    from ctsdr.planner import _tips_zero_outer_roll

    rng = np.random.default_rng(8)
    lo = rng.uniform(1.0, 40.0, size=30)
    li = lo + rng.uniform(0.5, 50.0, size=30)
    rel = rng.uniform(0.0, 360.0, size=30)
    batch = _tips_zero_outer_roll(config, lo, li, rel)
    pose = config.sheath.pose
    for i in range(30):
        joints = JointState(outer_translation=lo[i], inner_translation=min(li[i], 100.0),
                            outer_roll=0.0, inner_roll=rel[i])
        expected = tip_position(config, joints)
        got = pose.transform_point(batch[i])
        if li[i] <= 100.0:
            assert np.linalg.norm(got - expected) < 1e-9


def test_plan_round_trip_property(config):
    rng = np.random.default_rng(42)
    for _ in range(12):
        joints, target = _random_reachable(rng, config)
        req = PlanRequest(target=target, total_length=joints.inner_translation,
                          allowed_relative_rolls=None)
        res = plan_s_shape(req, config)
        assert res.tip_error < 0.5
        # The reported tip must agree with scalar kinematics at the winner.
        fk = tip_position(res.best.apply_config(config), res.best.joints())
        assert np.linalg.norm(fk - res.predicted_tip) < 1e-9
        assert np.linalg.norm(fk - target) == pytest.approx(res.tip_error, abs=1e-9)


def test_plan_is_deterministic(config):
    req = PlanRequest(target=(70.0, 15.0, 10.0), total_length=85.0,
                      allowed_relative_rolls=None)
    a = plan_s_shape(req, config)
    b = plan_s_shape(req, config)
    assert a.best == b.best
    assert a.cost == b.cost
    assert [r.candidate for r in a.ranked] == [r.candidate for r in b.ranked]


def test_restricted_rolls_are_respected(config):
    rng = np.random.default_rng(3)
    allowed = (0.0, 180.0)
    joints, target = _random_reachable(rng, config)
    req = PlanRequest(target=target, total_length=joints.inner_translation,
                      allowed_relative_rolls=allowed, feasibility_threshold=50.0)
    res = plan_s_shape(req, config)
    assert res.best.relative_roll in allowed
    assert all(r.candidate.relative_roll in allowed for r in res.ranked)


def test_ranked_candidates_are_sorted(config):
    req = PlanRequest(target=(70.0, 15.0, 10.0), total_length=85.0)
    res = plan_s_shape(req, config, top_k=5)
    assert len(res.ranked) == 5
    assert res.ranked[0].candidate == res.best
    grid_costs = [r.cost for r in res.ranked[1:]]
    assert grid_costs == sorted(grid_costs)
    assert res.cost <= grid_costs[0] + 1e-12


def test_radius_search_recovers_modified_tubes(config):
    cfg57 = replace(
        config,
        outer_tube=replace(config.outer_tube, precurvature_radius=57.0),
        inner_tube=replace(config.inner_tube, precurvature_radius=57.0),
    )
    joints = JointState(outer_translation=17.3, inner_translation=61.9,
                        outer_roll=25.0, inner_roll=205.0)
    target = tip_position(cfg57, joints)
    req = PlanRequest(target=target, total_length=61.9,
                      allowed_relative_rolls=(180.0,), radius_bounds=(40.0, 80.0))
    res = plan_s_shape(req, config)
    assert res.best.precurvature_radius == pytest.approx(57.0, abs=1.0)
    assert res.tip_error < 0.05
    assert res.best.outer_roll == pytest.approx(25.0, abs=0.1)


def test_unreachable_target_carries_best_attempt(config):
    req = PlanRequest(target=(200.0, 0.0, 0.0), total_length=90.0)
    with pytest.raises(UnreachableTargetError, match="no candidate within") as exc_info:
        plan_s_shape(req, config)
    best = exc_info.value.best
    assert best.tip_error > req.feasibility_threshold
    assert best.best.inner_translation <= config.joint_limits.inner_translation[1]


def test_plan_result_json(config):
    req = PlanRequest(target=(70.0, 15.0, 10.0), total_length=85.0)
    res = plan_s_shape(req, config)
    payload = json.loads(res.to_json())
    assert set(payload) == {"best", "predicted_tip", "tip_error", "length_error",
                            "cost", "ranked"}
    assert len(payload["ranked"]) == len(res.ranked)
    assert payload["best"]["outer_translation"] == res.best.outer_translation


def test_planned_script_reaches_predicted_tip(config):
    req = PlanRequest(target=(70.0, 15.0, 10.0), total_length=85.0,
                      allowed_relative_rolls=None)
    res = plan_s_shape(req, config)
    script = res.to_scenario_script(config, name="planned")
    rec = run_scenario(script, config)
    final = rec.final_joints
    assert final.outer_translation == pytest.approx(res.best.outer_translation, abs=1e-6)
    assert final.inner_translation == pytest.approx(res.best.inner_translation, abs=1e-6)
    assert final.outer_roll == pytest.approx(res.best.outer_roll)
    assert final.inner_roll == pytest.approx(res.best.inner_roll)
    assert np.linalg.norm(rec.tips[-1] - res.predicted_tip) < 1e-6
