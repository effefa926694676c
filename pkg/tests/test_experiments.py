from dataclasses import replace

import numpy as np
import pytest

from graphfree.config import TrainConfig, load_config, parse_config
from graphfree.data import default_graph, synth_sbm_generate, synth_st_generate
from graphfree.errors import ArgumentError, TrainingError
from graphfree.experiments import (ABLATION_FORMS, Forecaster, predict_labels, run_ablation_suite,
                                   run_identity_suite, run_swap_suite, train_forecaster,
                                   train_node_classifier, _resolve_adjacency)
from graphfree.config import NodeClassConfig
from graphfree.layers import load_params
from graphfree.optim import AdamConfig, AdamState, adam_step
from graphfree.tensor import make_rng

QUICK = TrainConfig(epochs=3, batch_size=32, hidden_dim=4)


@pytest.fixture(scope="module")
def small():
    g, _ = default_graph(8, make_rng(7, 0))
    return synth_st_generate(g, 400, make_rng(7, 1), alpha=0.3, noise=0.02, amplitude=0.1,
                             obs_noise=0.1, phase_spread=1.0)

# --- optimizer


def test_adam_zero_gradient_is_a_no_op():
    params = {"w": np.arange(6.0).reshape(2, 3)}
    new, state = adam_step(params, {"w": np.zeros((2, 3))}, AdamState(), AdamConfig())
    assert np.array_equal(new["w"], params["w"])
    assert not np.any(state.m["w"]) and not np.any(state.v["w"])
    assert state.step == 1


def test_adam_constant_gradient_step_tends_to_lr():
    cfg = AdamConfig(lr=1e-2)
    params, state = {"w": np.zeros(3)}, AdamState()
    g = {"w": np.array([0.3, -2.0, 1e-3])}
    for _ in range(2000):
        prev = params["w"]
        params, state = adam_step(params, g, state, cfg)
    step = params["w"] - prev
    assert np.allclose(np.abs(step), cfg.lr, rtol=1e-4)
    assert np.array_equal(np.sign(step), -np.sign(g["w"]))


def test_adam_leaves_inputs_untouched():
    params = {"w": np.ones(2)}
    adam_step(params, {"w": np.ones(2)}, AdamState(), AdamConfig())
    assert np.array_equal(params["w"], np.ones(2))

# --- configuration


def test_config_validation(tmp_path):
    with pytest.raises(ArgumentError):
        parse_config({"learning_rate": -1})
    with pytest.raises(ArgumentError):
        parse_config({"spatial_kind": "Transformer"})
    with pytest.raises(ArgumentError):
        parse_config({"bogus": 1})
    with pytest.raises(ArgumentError):
        parse_config({"bench": {"repeats": 2}})
    path = tmp_path / "c.toml"
    path.write_text('epochs = 4\n[data]\nn = 12\n[bench]\nn_list = [8, 16, 32]\n')
    cfg = load_config(path, seed=9)
    assert (cfg.train.epochs, cfg.train.seed, cfg.data.n, cfg.bench.n_list) == (4, 9, 12, (8, 16, 32))

# --- forecaster


def test_forecaster_gradients_match_finite_differences(small):
    cfg = replace(QUICK, window_in=3, window_out=2)
    for kind in ("GraphConv", "Gfs"):
        cfg_k = replace(cfg, spatial_kind=kind)
        model = Forecaster.build(cfg_k, 8, 1, _resolve_adjacency(small, cfg_k), make_rng(0))
        x = make_rng(1).standard_normal((2, 3, 8, 1))
        proj = make_rng(2).standard_normal((2, 2, 8, 1))
        pred, cache = model.forward(x)
        grads = model.backward(cache, proj)
        params = model.arrays()
        for name in ("head.w", "spatial.w_s1" if kind == "Gfs" else "spatial.weight"):
            idx = (0, 1)
            bumped = []
            for sign in (1, -1):
                p = {k: a.copy() for k, a in params.items()}
                p[name][idx] += sign * 1e-6
                bumped.append(np.sum(model.with_arrays(p).forward(x)[0] * proj))
            fd = (bumped[0] - bumped[1]) / 2e-6
            assert fd == pytest.approx(grads[name][idx], rel=1e-5, abs=1e-9)


def test_training_is_deterministic_and_checkpointed(small, tmp_path):
    a = train_forecaster(small, QUICK, checkpoint=tmp_path / "ck.json")
    b = train_forecaster(small, QUICK)
    assert a == b
    assert a.data() == b.data()
    assert len(a.horizon) == QUICK.window_out
    assert set(a.metrics) == {"val", "test"}
    saved = load_params(tmp_path / "ck.json")
    assert "head.w" in saved and "spatial.weight" in saved


def test_training_rejects_short_splits():
    g, _ = default_graph(4, make_rng(0))
    ds = synth_st_generate(g, 80, make_rng(1))
    with pytest.raises(ArgumentError, match="no windows"):
        train_forecaster(ds, QUICK)


def test_non_finite_loss_aborts(small):
    with np.errstate(all="ignore"), pytest.raises(TrainingError, match="non-finite"):
        train_forecaster(small, replace(QUICK, learning_rate=1e300))


@pytest.mark.slow
def test_decoupled_sinusoids_are_learned():
    g, _ = default_graph(10, make_rng(7, 0))
    ds = synth_st_generate(g, 1440, make_rng(7, 1), alpha=0.0, noise=0.0, amplitude=0.1)
    span = np.ptp(ds.values)
    for kind in ("GraphConv", "Gfs"):
        rep = train_forecaster(ds, TrainConfig(spatial_kind=kind))
        assert rep.metrics["test"]["mae"] <= 0.05 * span


@pytest.mark.slow
def test_zero_noise_diffusion_prefers_true_graph():
    g, _ = default_graph(50, make_rng(7, 0))
    ds = synth_st_generate(g, 1440, make_rng(7, 1), alpha=0.3, noise=0.0, amplitude=0.1)
    true, ident = (train_forecaster(ds, TrainConfig(adjacency_kind=k)).metrics["test"]["mae"]
                   for k in ("True", "I"))
    assert true < ident

# --- suites (shape and bookkeeping; directions live in the acceptance suite)


def test_swap_suite_shape(small):
    table = run_swap_suite(small, QUICK)
    assert [r["adjacency_kind"] for r in table["rows"]] == ["True", "R", "M", "I+R", "I+M"]
    for r in table["rows"]:
        assert {"mae", "rmse", "mape"} <= set(r["test"])
        assert r["config"]["adjacency_kind"] == r["adjacency_kind"]
    assert table["rows"][0]["mae_rel_to_true"] == 0.0


def test_swap_runs_share_initial_parameters(small):
    inits = []
    for kind in ("True", "R", "M"):
        cfg = replace(QUICK, adjacency_kind=kind)
        inits.append(Forecaster.build(cfg, 8, 1, _resolve_adjacency(small, cfg),
                                      make_rng(cfg.seed, 10)).arrays())
    for other in inits[1:]:
        for k in inits[0]:
            assert np.array_equal(inits[0][k], other[k])


def test_identity_suite_shape(small):
    rows = run_identity_suite(small, QUICK)["rows"]
    assert [(r["label"], r.get("adjacency_kind")) for r in rows] == [
        ("GraphConv", "True"), ("GraphConv", "I"), ("Gfs", None)]
    assert "adjacency_kind" not in rows[2]["config"]
    assert rows[0]["delta_pct"] == {"mae": 0.0, "rmse": 0.0, "mape": 0.0}
    assert set(rows[1]["delta_pct"]) == {"mae", "rmse", "mape"}


def test_ablation_suite_shape(small):
    rows = run_ablation_suite(small, QUICK)["rows"]
    assert [r["label"] for r in rows] == list(ABLATION_FORMS)
    by = {r["label"]: r["config"] for r in rows}
    diff = {k for k in by["Full"] if by["Full"][k] != by["LNNNoP"][k]}
    assert diff == {"ln_affine"}

# --- node classification


def test_argmax_ties_pick_lowest_class():
    logits = np.array([[1.0, 3.0, 3.0], [2.0, 2.0, 2.0], [0.0, -1.0, 5.0]])
    assert predict_labels(logits).tolist() == [1, 0, 2]


def test_node_classifier_runs_and_reports_baseline():
    ds = synth_sbm_generate(80, 4, 0.2, 0.01, 8, 10.0, make_rng(0))
    cfg = NodeClassConfig(n=80, feature_dim=8, hidden_dim=8, epochs=20)
    for kind in ("GfsStack3", "GcnStack3"):
        rep = train_node_classifier(ds, kind, cfg)
        assert len(rep["train_loss"]) == 20
        assert rep["train_loss"][-1] < rep["train_loss"][0]
        assert 0.0 <= rep["majority_baseline"] <= 0.5
    with pytest.raises(ArgumentError):
        train_node_classifier(ds, "MlpStack3", cfg)


def test_majority_baseline_near_chance():
    ds = synth_sbm_generate(400, 4, 0.05, 0.005, 16, 10.0, make_rng(11))
    rep = train_node_classifier(ds, "GfsStack3", NodeClassConfig(epochs=1))
    assert abs(rep["majority_baseline"] - 0.25) <= 0.15


def test_shipped_default_config_matches_builtin_defaults():
    from pathlib import Path

    path = Path(__file__).resolve().parents[1] / "configs" / "default.toml"
    assert load_config(path) == load_config()
