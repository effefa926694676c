import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from graphfree.adjacency import AdjacencyMatrix, gen_identity, gen_uniform
from graphfree.data import (MinMaxScaler, StDataset, chrono_split, default_graph,
                            interpolate_missing, load_csv, load_edgelist, sliding_windows,
                            synth_sbm_generate, synth_st_generate, window_count, windowize,
                            write_csv)
from graphfree.errors import ArgumentError, DataError, DimensionError, ParseError
from graphfree.experiments import log_softmax
from graphfree.metrics import evaluate, mae, mape, mape_masked, rmse
from graphfree.tensor import make_rng

# --- metrics


def test_metric_hand_cases():
    v, v_hat = [[100.0, 200.0]], [[90.0, 220.0]]
    assert mae(v, v_hat) == 15.0
    assert mape(v, v_hat) == pytest.approx(0.10, abs=1e-15)
    assert rmse(v, v_hat) == np.sqrt(250.0)
    assert round(rmse(v, v_hat), 4) == 15.8114
    rec = evaluate(v, v)
    assert (rec.mae, rec.rmse, rec.mape, rec.masked_count) == (0.0, 0.0, 0.0, 0)


def test_mape_masking():
    value, masked = mape_masked([0.0, 1e-9, 4.0], [1.0, 1.0, 5.0])
    assert masked == 2 and value == 0.25
    assert evaluate([0.0, 2.0], [1.0, 1.0]).masked_count == 1
    with pytest.raises(ArgumentError):
        mape([0.0, 0.0], [1.0, 1.0])
    with pytest.raises(DimensionError):
        mae([1.0, 2.0], [1.0])


# values on a 1e-3 grid, so squared differences cannot underflow
grid = st.integers(-10**6, 10**6).map(lambda i: i / 1000)


@settings(max_examples=100, deadline=None)
@given(arrays(float, st.integers(1, 30), elements=grid), st.data())
def test_metric_relations(v, data):
    v_hat = data.draw(arrays(float, v.shape, elements=grid))
    assert 0 <= mae(v, v_hat) <= rmse(v, v_hat) * (1 + 1e-12)
    assert mae(v, v_hat) == mae(v_hat, v)

# --- normalization, splitting, windows


def test_minmax_examples():
    s = MinMaxScaler.fit(np.array([0.0, 50.0, 100.0]))
    assert np.array_equal(s.apply(np.array([0.0, 50.0, 100.0])), [-1.0, 0.0, 1.0])
    with pytest.raises(ArgumentError):
        MinMaxScaler.fit(np.array([3.0, 3.0]))


@settings(max_examples=60, deadline=None)
@given(arrays(float, st.integers(2, 40), elements=st.floats(-1e4, 1e4)))
def test_minmax_round_trip(x):
    if np.ptp(x) < 1e-6:
        return
    s = MinMaxScaler.fit(x)
    assert np.allclose(s.invert(s.apply(x)), x, rtol=1e-12, atol=1e-9)
    assert s.apply(x).min() == -1.0 and s.apply(x).max() == pytest.approx(1.0, abs=1e-15)


def test_split_examples():
    assert chrono_split(10) == (6, 8)
    assert chrono_split(100) == (60, 80)
    assert chrono_split(2880) == (1728, 2304)
    with pytest.raises(ArgumentError):
        chrono_split(3)


def test_window_counts():
    assert window_count(30, 12, 12) == 7
    assert window_count(24, 12, 12) == 1
    assert window_count(23, 12, 12) == 0
    x, y = sliding_windows(np.arange(23.0)[:, None, None], 12, 12)
    assert x.shape == (0, 12, 1, 1) and y.shape == (0, 12, 1, 1)


def test_windows_stay_inside_split(caplog):
    values = np.arange(100.0)[:, None, None] * np.ones((1, 3, 1))
    ds = StDataset.from_values(values, 3, 2)
    x, y = windowize(ds, "val", normalized=False)
    assert x.shape == (16, 3, 3, 1) and y.shape == (16, 2, 3, 1)
    assert x.min() == 60 and y.max() == 79
    assert np.array_equal(y[:, 0], x[:, -1] + 1)
    short = StDataset.from_values(values[:20], 12, 12)
    assert len(windowize(short, "test")[0]) == 0
    assert "too short" in caplog.text


def test_normalization_uses_train_segment_only():
    values = np.concatenate([np.linspace(0, 1, 60), np.full(40, 100.0)])[:, None]
    ds = StDataset.from_values(values)
    assert (ds.scaler.lo, ds.scaler.hi) == (0.0, 1.0)
    assert ds.normalized().max() > 1.0

# --- generators


def test_decoupled_limit_ignores_graph():
    kw = dict(t=600, alpha=0.0, noise=0.0, amplitude=0.5)
    a = synth_st_generate(gen_uniform(6), rng=make_rng(3), **kw)
    b = synth_st_generate(gen_identity(6), rng=make_rng(3), **kw)
    assert np.array_equal(a.values, b.values)
    # each vertex is a sinusoid of the daily period
    x = a.values[:, :, 0]
    assert np.allclose(x[288:576], x[:288], atol=1e-9)


def test_averaging_collapse():
    n, t = 5, 50
    ds = synth_st_generate(gen_uniform(n), t, make_rng(8), alpha=1.0, noise=0.0,
                           amplitude=1.0, shift=False)
    r = make_rng(8)
    amps = r.uniform(0.5, 1.5, size=n)
    phases = r.uniform(0.0, 2 * np.pi, size=n)
    x = ds.values[:, :, 0]
    steps = np.arange(t - 1)[:, None]
    diffused = x[1:] - amps * np.sin(2 * np.pi * steps / 288 + phases)
    assert np.abs(diffused - diffused[:, :1]).max() <= 1e-12


def test_generator_is_deterministic():
    g, _ = default_graph(12, make_rng(0))
    a = synth_st_generate(g, 300, make_rng(1), obs_noise=0.1)
    b = synth_st_generate(g, 300, make_rng(1), obs_noise=0.1)
    assert np.array_equal(a.values, b.values)
    assert a.values.min() > 0
    with pytest.raises(ArgumentError):
        synth_st_generate(AdjacencyMatrix(2 * np.eye(3)), 100, make_rng(1))


def test_sbm_linear_probe_separates_classes():
    ds = synth_sbm_generate(400, 4, 0.05, 0.005, 16, 10.0, make_rng(11))
    x = np.hstack([ds.features, np.ones((400, 1))])
    onehot = np.eye(4)[ds.labels]
    w = np.zeros((17, 4))
    for _ in range(300):
        p = np.exp(log_softmax(x @ w))
        w -= 0.05 * x.T @ (p - onehot) / 400
    acc = np.mean(np.argmax(x @ w, axis=1) == ds.labels)
    assert acc >= 0.99
    a = ds.adjacency.values
    assert np.allclose(a.sum(axis=1), 1.0)
    assert np.all(np.diag(a) > 0)
    assert len(np.intersect1d(ds.train_mask, ds.test_mask)) == 0
    assert len(ds.train_mask) + len(ds.test_mask) == 400
    assert np.array_equal(np.bincount(ds.labels), [100] * 4)

# --- files


def test_interpolation_examples():
    col = np.array([[1.0], [np.nan], [3.0]])
    assert np.array_equal(interpolate_missing(col), [[1.0], [2.0], [3.0]])
    col = np.array([[np.nan], [5.0], [5.0]])
    assert np.array_equal(interpolate_missing(col), [[5.0], [5.0], [5.0]])
    with pytest.raises(DataError):
        interpolate_missing(np.array([[1.0, np.nan], [2.0, np.nan]]))


def test_csv_round_trip(tmp_path):
    g, _ = default_graph(4, make_rng(0))
    ds = synth_st_generate(g, 50, make_rng(2))
    write_csv(tmp_path / "d.csv", ds.values)
    assert np.array_equal(load_csv(tmp_path / "d.csv"), ds.values)


@pytest.mark.parametrize("text, line", [
    ("x,v0\n0,1\n", 1),
    ("t,v0,v1\n0,1,2\n1,2\n", 3),
    ("t,v0\n0,1\n1,2\n2,abc\n", 4),
    ("t,v0\n", 2),
])
def test_csv_parse_errors_carry_line(tmp_path, text, line):
    path = tmp_path / "bad.csv"
    path.write_text(text)
    with pytest.raises(ParseError) as err:
        load_csv(path)
    assert err.value.line == line
    assert str(err.value).startswith(f"line {line}:")


def test_csv_missing_cells(tmp_path):
    path = tmp_path / "gap.csv"
    path.write_text("t,v0,v1\n0,1,\n1,,2\n2,3,nan\n")
    raw = load_csv(path)
    assert np.isnan(raw).sum() == 3
    assert np.array_equal(interpolate_missing(raw)[:, 0, 0], [1.0, 2.0, 3.0])


def test_edgelist(tmp_path):
    path = tmp_path / "g.csv"
    path.write_text("# src,dst,weight\n0,1,0.5\n\n2,0,2\n")
    a = load_edgelist(path)
    assert a.n == 3 and a.values[0, 1] == 0.5 and a.values[1, 0] == 0
    assert load_edgelist(path, undirected=True).values[1, 0] == 0.5
    with pytest.raises(DataError):
        load_edgelist(path, n=2)
    path.write_text("0,1,0.5\n0,x,1\n")
    with pytest.raises(ParseError, match="line 2"):
        load_edgelist(path)
