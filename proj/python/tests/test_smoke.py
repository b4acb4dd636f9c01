import math

import pytest

import vislearn


def test_status_levels():
    assert vislearn.status(0.95, 0.95) == 2
    assert vislearn.status(0.7, 0.95) == 1
    assert vislearn.status(0.5, 0.95) == 0
    assert vislearn.status(0.1, 0.95, provided=True) == 2


def test_threshold_mdp_helpers():
    assert vislearn.delta_acc_level(0.5, 0.6) == 1
    assert vislearn.delta_acc_level(0.6, 0.5) == -1
    assert vislearn.delta_acc_level(0.5, 0.5) == 0
    assert vislearn.apply_threshold_action(0.95, "Increase") == pytest.approx(0.95)
    assert vislearn.apply_threshold_action(0.80, "Decrease") == pytest.approx(0.75)
    assert vislearn.apply_threshold_action(0.65, "Decrease") == pytest.approx(0.65)
    assert vislearn.threshold_reward(0.5, 0.52) == pytest.approx(2.0)
    with pytest.raises(vislearn.VislearnError):
        vislearn.apply_threshold_action(0.8, "Sideways")


def test_r_perf():
    assert vislearn.r_perf(0.5, 250.0) == pytest.approx(0.002)
    with pytest.raises(vislearn.VislearnError):
        vislearn.r_perf(0.5, 0.0)


def test_dataset_is_deterministic_and_balanced():
    a = vislearn.generate_dataset(seed=7)
    b = vislearn.generate_dataset(seed=7)
    assert a == b
    assert len(a["train"]) == 500 and len(a["test"]) == 100
    ids = {o["id"] for o in a["train"]} | {o["id"] for o in a["test"]}
    assert len(ids) == 600
    assert all(len(o["colour_features"]) == 3 for o in a["train"])


def test_grounding_learns_and_round_trips():
    data = vislearn.generate_dataset(noise_sigma=0.0, train_size=120, test_size=12, seed=3)
    g = vislearn.GroundingMap(learning_rate=3.0)
    for o in data["train"]:
        g.learn_from_label(o["colour_features"], o["shape_features"], o["colour"])
        g.learn_from_label(o["colour_features"], o["shape_features"], o["shape"])
    right = 0
    for o in data["test"]:
        word, confidence = g.best_prediction("colour", o["colour_features"])
        assert 0.0 < confidence < 1.0
        assert 0.0 < g.predict_proba(o["colour"], o["colour_features"]) < 1.0
        right += word == o["colour"]
        right += g.best_prediction("shape", o["shape_features"])[0] == o["shape"]
    assert right >= 0.9 * 2 * len(data["test"])
    assert vislearn.GroundingMap.loads(g.dumps()) == g
    assert len(g.words()) == 9


def test_config_defaults_and_rejection():
    cfg = vislearn.canonical_config({"folds": 3})
    assert cfg["folds"] == 3 and cfg["instances"] == 500
    with pytest.raises(vislearn.VislearnError):
        vislearn.canonical_config({"no_such_key": 1})


def test_small_experiment(tmp_path):
    summary = vislearn.run_experiment(
        {"folds": 2, "rl_pretrain_runs": 1, "threads": 1, "conditions": ["constant95", "decay05"]}, tmp_path)
    assert [s["condition"] for s in summary] == ["constant95", "decay05"]
    for s in summary:
        assert s["runs"] == 2
        assert s["total_cost_mean"] > 0
        assert math.isclose(s["r_perf"], s["delta_accuracy_mean"] / s["total_cost_mean"])
    assert (tmp_path / "manifest.json").exists()


def test_live_session_messages(tmp_path):
    live = vislearn.LiveSessions(state_dir=tmp_path)
    created = live.create("rule-constant95", 5)
    sid = created["session"]
    events = created["events"]
    assert [e["seq"] for e in events] == list(range(1, len(events) + 1))
    for e in events:
        assert set(e) >= {"v", "type", "session", "seq", "act", "utterance", "state", "cost"}
    before = live.total_cost(sid)
    out = live.turn(sid, "asdfgh")
    assert live.total_cost(sid) == before
    assert out[0]["seq"] == events[-1]["seq"] + 1
    with pytest.raises(vislearn.ServiceError) as err:
        live.create("no-such-policy", 1)
    assert err.value.status == 400
    live.end(sid)
    with pytest.raises(vislearn.ServiceError) as err:
        live.turn(sid, "it is red")
    assert err.value.status == 410
    assert (tmp_path / f"{sid}.jsonl").exists()
