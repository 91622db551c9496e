import base64
import json

import numpy as np
import pytest

from ctsdr.model import default_config
from ctsdr.phantom import create_phantom
from ctsdr.service import (
    PROTOCOL_VERSION,
    SUBSTEP_DT,
    Session,
    create_app,
    decode_message,
    encode_message,
    handle_message,
    resolve_config,
    tick,
)
from ctsdr.simulator import run_scenario, scenario_by_name


def _msg(kind, **fields):
    return {"v": PROTOCOL_VERSION, "kind": kind, **fields}


def _drive(session, n_ticks, sink=None):
    """Run n ticks, returning every broadcast message in order."""
    out = [] if sink is None else sink
    for _ in range(n_ticks):
        out.extend(tick(session))
    return out


def _run_script_to_completion(session, sink, max_ticks=6000):
    for _ in range(max_ticks):
        sink.extend(tick(session))
        if session.mode != "scripted":
            return
    raise AssertionError("script did not finish")


def _session_phantom():
    return create_phantom(size=(20.0, 20.0, 20.0), voxel_size=0.5,
                          origin=(1.0, -10.0, -10.0))


# -- wire encoding -------------------------------------------------------------


def test_encode_is_compact_single_line():
    line = encode_message({"v": 1, "kind": "state", "tip": [1.0, 2.0, 3.0]})
    assert "\n" not in line and " " not in line
    assert json.loads(line) == {"v": 1, "kind": "state", "tip": [1.0, 2.0, 3.0]}


def test_decode_rejects_non_objects():
    assert decode_message("not json") is None
    assert decode_message("[1, 2]") is None
    assert decode_message('"text"') is None
    assert decode_message('{"kind": "jog"}') == {"kind": "jog"}


# -- session basics ------------------------------------------------------------


def test_hello_advertises_limits_and_scenarios(config):
    session = Session("abc", config=config)
    hello = session.hello()
    assert hello["seq"] == 0
    assert hello["v"] == PROTOCOL_VERSION
    assert hello["event"] == "connected"
    assert hello["session"] == "abc"
    limits = hello["limits"]
    assert limits["max_translation_speed"] == config.joint_limits.max_translation_speed
    assert limits["max_roll_speed"] == config.joint_limits.max_roll_speed
    assert limits["feed_limit"] == config.feed_limit
    assert limits["spindle_max"] == config.spindle_max
    assert hello["scenarios"] == ["S1", "S2", "OOP90"]


def test_state_message_shape(config):
    session = Session("abc", config=config)
    state = json.loads(encode_message(session.state_message()))
    assert set(state) == {"v", "kind", "seq", "t", "mode", "joints", "spindle",
                          "tip", "faulted"}
    assert set(state["joints"]) == {"outer_translation", "inner_translation",
                                    "outer_roll", "inner_roll"}
    assert state["kind"] == "state"
    assert state["mode"] == "idle"
    assert state["tip"] == [0.0, 0.0, 0.0]
    assert state["faulted"] is False


def test_sequence_numbers_are_gapless(config):
    session = Session("abc", config=config)
    out = [session.hello()]
    out += handle_message(session, _msg("load_scenario", name="S1"))
    out += handle_message(session, _msg("jog", rates={"outer_translation": 1.0}))
    _drive(session, 7, out)
    out += handle_message(session, _msg("stop"))
    out += handle_message(session, _msg("bogus"))
    _drive(session, 3, out)
    assert [m["seq"] for m in out] == list(range(len(out)))


def test_malformed_and_versioned_messages_rejected(config):
    session = Session("abc", config=config)
    (reply,) = handle_message(session, None)
    assert reply["event"] == "rejected" and "malformed" in reply["reason"]
    (reply,) = handle_message(session, {"rates": {}})
    assert "malformed" in reply["reason"]
    (reply,) = handle_message(session, {"v": 99, "kind": "jog", "rates": {}})
    assert "version" in reply["reason"]
    (reply,) = handle_message(session, _msg("warp"))
    assert "unknown kind" in reply["reason"]


# -- jogging -------------------------------------------------------------------


def test_jog_integrates_rates(config):
    session = Session("abc", config=config)
    assert handle_message(session, _msg("jog", rates={
        "outer_translation": 1.65, "inner_translation": 1.65})) == []
    assert session.mode == "jogging"
    out = _drive(session, 50)
    states = [m for m in out if m["kind"] == "state"]
    assert len(states) == 50
    final = states[-1]
    # 50 ticks at 50 Hz is one second of motion.
    assert final["joints"]["outer_translation"] == pytest.approx(1.65, abs=1e-9)
    assert final["joints"]["inner_translation"] == pytest.approx(1.65, abs=1e-9)
    assert final["t"] == pytest.approx(1.0, abs=1e-9)
    assert final["mode"] == "jogging"


def test_jog_validation(config):
    session = Session("abc", config=config)
    (reply,) = handle_message(session, _msg("jog", rates={"elbow": 1.0}))
    assert "unknown rate keys" in reply["reason"]
    (reply,) = handle_message(session, _msg("jog", rates={"outer_roll": "fast"}))
    assert "numbers" in reply["reason"]
    (reply,) = handle_message(session, _msg("jog", rates=[1.0]))
    assert "object" in reply["reason"]
    assert session.mode == "idle"


def test_jog_speed_clamp_emits_event(config):
    session = Session("abc", config=config)
    handle_message(session, _msg("jog", rates={"outer_translation": 500.0,
                                               "inner_translation": 500.0}))
    out = _drive(session, 2)
    clamps = [m for m in out if m.get("event") == "clamp"]
    assert clamps and clamps[0]["reason"] == "speed limit"
    states = [m for m in out if m["kind"] == "state"]
    limit = config.joint_limits.max_translation_speed
    assert states[-1]["joints"]["outer_translation"] == pytest.approx(
        limit * 2 * 2 * SUBSTEP_DT)


def test_set_spindle_immediate_and_clamped(config):
    session = Session("abc", config=config)
    handle_message(session, _msg("set_spindle", rpm=1e9))
    assert session.sim.joints.spindle == config.spindle_max
    handle_message(session, _msg("set_spindle", rpm=-5))
    assert session.sim.joints.spindle == 0.0
    (reply,) = handle_message(session, _msg("set_spindle", rpm="fast"))
    assert "numeric rpm" in reply["reason"]
    (reply,) = handle_message(session, _msg("set_spindle"))
    assert "numeric rpm" in reply["reason"]


def test_stop_zeroes_rates_and_holds_position(config):
    session = Session("abc", config=config)
    handle_message(session, _msg("jog", rates={"outer_translation": 2.0,
                                               "inner_translation": 2.0}))
    _drive(session, 10)
    (reply,) = handle_message(session, _msg("stop"))
    assert reply["event"] == "stopped"
    assert session.mode == "idle"
    before = json.dumps(tick(session)[-1]["joints"])
    after = json.dumps(tick(session)[-1]["joints"])
    assert before == after


# -- scenarios -----------------------------------------------------------------


def test_load_scenario_replies_with_phases(config):
    session = Session("abc", config=config)
    (reply,) = handle_message(session, _msg("load_scenario", name="S2"))
    assert reply["event"] == "scenario_loaded"
    assert reply["scenario"] == "S2"
    assert reply["phases"] == ["pre-extend", "co-advance", "inner-advance"]
    (reply,) = handle_message(session, _msg("load_scenario", name="S9"))
    assert reply["event"] == "rejected" and "unknown scenario" in reply["reason"]


def test_start_requires_loaded_scenario(config):
    session = Session("abc", config=config)
    (reply,) = handle_message(session, _msg("start"))
    assert "no scenario loaded" in reply["reason"]


def test_scripted_run_matches_batch_execution(config, s2_record):
    session = Session("abc", config=config)
    handle_message(session, _msg("load_scenario", name="S2"))
    replies = handle_message(session, _msg("start"))
    assert replies[-1]["event"] == "script_start"
    assert session.mode == "scripted"

    out = []
    _run_script_to_completion(session, out)
    # Streamed execution retraces the batch run exactly, sample for sample.
    batch = s2_record.final_joints
    final = session.sim.joints
    assert final.outer_translation == batch.outer_translation
    assert final.inner_translation == batch.inner_translation
    assert final.outer_roll == batch.outer_roll
    assert final.inner_roll == batch.inner_roll
    assert np.array_equal(session.sim.tip, s2_record.tips[-1])

    metrics = [m for m in out if m["kind"] == "metrics"]
    assert len(metrics) == 1
    assert metrics[0]["scenario"] == "S2"
    assert metrics[0]["plane_angle_deg"] == pytest.approx(0.0, abs=1.0)
    assert metrics[0]["report"]["runs_used"] == 1
    # The finishing tick orders events, then state, then metrics.
    assert out[-1]["kind"] == "metrics"
    assert out[-2]["kind"] == "state" and out[-2]["mode"] == "idle"

    phase_events = [m["phase"] for m in out if m.get("event") == "phase_start"]
    assert phase_events == ["pre-extend", "co-advance", "inner-advance"]


def test_scripted_oop90_reports_out_of_plane_metrics(config):
    session = Session("abc", config=config)
    handle_message(session, _msg("load_scenario", name="OOP90"))
    handle_message(session, _msg("start"))
    out = []
    _run_script_to_completion(session, out)
    ends = [m for m in out if m.get("event") == "phase_end"]
    assert [m["phase"] for m in ends] == ["co-advance", "roll", "inner-advance"]
    assert all(m["completed"] for m in ends)
    (metrics,) = [m for m in out if m["kind"] == "metrics"]
    assert metrics["plane_angle_deg"] == pytest.approx(89.2, abs=0.5)


def test_jog_and_start_rejected_while_scripted(config):
    session = Session("abc", config=config)
    handle_message(session, _msg("load_scenario", name="S1"))
    handle_message(session, _msg("start"))
    for inbound in (_msg("jog", rates={}), _msg("start"),
                    _msg("load_scenario", name="S2"), _msg("set_spindle", rpm=100)):
        (reply,) = handle_message(session, inbound)
        assert "scripted run in progress" in reply["reason"]


def test_stop_aborts_scripted_run(config):
    session = Session("abc", config=config)
    handle_message(session, _msg("load_scenario", name="S1"))
    handle_message(session, _msg("start"))
    _drive(session, 5)
    replies = handle_message(session, _msg("stop"))
    stops = [m for m in replies if m.get("event") == "script_stop"]
    assert stops and stops[0]["completed"] is False
    assert session.mode == "idle"
    assert session.runner is None


# -- faults and reset ------------------------------------------------------------


def test_fault_latches_until_reset():
    config = default_config()
    session = Session("abc", config=config, phantom=_session_phantom())
    handle_message(session, _msg("jog", rates={"outer_translation": 1.65,
                                               "inner_translation": 1.65}))
    out = _drive(session, 3)
    faults = [m for m in out if m.get("event") == "fault"]
    assert faults and faults[0]["fault"] == "advance without spindle"
    assert session.mode == "faulted"
    states = [m for m in out if m["kind"] == "state"]
    assert states[-1]["faulted"] is True

    for inbound in (_msg("jog", rates={}), _msg("set_spindle", rpm=0),
                    _msg("stop"), _msg("start"), _msg("load_scenario", name="S1")):
        (reply,) = handle_message(session, inbound)
        assert "reset required" in reply["reason"]

    seq_before = session.seq
    (reply,) = handle_message(session, _msg("reset"))
    assert reply["event"] == "reset"
    assert reply["seq"] == seq_before  # monotonic across the reset
    assert session.mode == "idle"
    assert not session.sim.faulted
    assert session.sim.joints.outer_translation == 0.0
    assert session.phantom.occupied_count() == session.phantom.voxel_count
    state = tick(session)[-1]
    assert state["kind"] == "state" and state["faulted"] is False


def test_reset_restores_carved_phantom(config):
    session = Session("abc", config=config, phantom=_session_phantom())
    handle_message(session, _msg("set_spindle", rpm=1000))
    handle_message(session, _msg("jog", rates={"outer_translation": 1.65,
                                               "inner_translation": 1.65}))
    _drive(session, 30)
    assert session.phantom.occupied_count() < session.phantom.voxel_count
    handle_message(session, _msg("reset"))
    assert session.phantom.occupied_count() == session.phantom.voxel_count
    assert session.spindle_target == 0.0


# -- projections -----------------------------------------------------------------


def test_projection_full_frame_then_diffs(config):
    session = Session("abc", config=config, phantom=_session_phantom())
    handle_message(session, _msg("set_spindle", rpm=1000))
    handle_message(session, _msg("jog", rates={"outer_translation": 2.0,
                                               "inner_translation": 2.0}))
    out = _drive(session, 1)
    first = [m for m in out if m["kind"] == "projection"]
    assert [m["axis"] for m in first] == ["z", "y"]
    for m in first:
        assert (m["x"], m["y"]) == (0, 0)
        assert m["width"] == m["full_width"] and m["height"] == m["full_height"]
        assert len(base64.b64decode(m["data"])) == m["width"] * m["height"]

    out = _drive(session, 25)
    tiles = [m for m in out if m["kind"] == "projection"]
    assert [m["axis"] for m in tiles] == ["z", "y"]
    for m in tiles:
        assert m["width"] < m["full_width"] or m["height"] < m["full_height"]
        assert 0 <= m["x"] and m["x"] + m["width"] <= m["full_width"]
        assert 0 <= m["y"] and m["y"] + m["height"] <= m["full_height"]
        assert len(base64.b64decode(m["data"])) == m["width"] * m["height"]


def test_projection_skipped_when_unchanged(config):
    session = Session("abc", config=config, phantom=_session_phantom())
    out = _drive(session, 1)
    assert [m["kind"] for m in out][-2:] == ["projection", "projection"]
    out = _drive(session, 25)
    assert all(m["kind"] != "projection" for m in out)


def test_no_projections_without_phantom(config):
    session = Session("abc", config=config)
    out = _drive(session, 26)
    assert all(m["kind"] != "projection" for m in out)


# -- HTTP app ---------------------------------------------------------------------


def test_resolve_config_default(monkeypatch):
    monkeypatch.delenv("CTSDR_CONFIG", raising=False)
    assert resolve_config() == default_config()


def test_http_endpoints(config):
    from fastapi.testclient import TestClient

    app = create_app(config=config)
    with TestClient(app) as client:
        health = client.get("/health")
        assert health.status_code == 200
        assert health.json() == {"status": "ok"}

        scenarios = client.get("/scenarios").json()["scenarios"]
        assert [s["name"] for s in scenarios] == ["S1", "S2", "OOP90"]
        assert scenarios[1]["phases"] == ["pre-extend", "co-advance", "inner-advance"]


def test_websocket_session_smoke(config):
    from fastapi.testclient import TestClient

    app = create_app(config=config)
    with TestClient(app) as client:
        with client.websocket_connect("/session/smoke") as ws:
            hello = json.loads(ws.receive_text())
            assert hello["event"] == "connected"
            assert hello["seq"] == 0
            ws.send_text(encode_message(_msg("jog", rates={"outer_translation": 1.0})))
            mode = None
            for _ in range(40):
                msg = json.loads(ws.receive_text())
                if msg["kind"] == "state":
                    mode = msg["mode"]
                    if mode == "jogging" and msg["joints"]["outer_translation"] > 0:
                        break
            assert mode == "jogging"
