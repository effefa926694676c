import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graphfree import layers as L
from graphfree.adjacency import ln_equivalent_matrix
from graphfree.errors import ArgumentError
from graphfree.tensor import make_rng
from graphfree.verify import (check_ln_decomposition, decomposition_sweep, gradcheck,
                              gradcheck_all, layer_cases)


def test_decomposition_hand_case():
    rep = check_ln_decomposition([1.0, 3.0], [1.0, 1.0])
    assert rep.max_abs_diff == 0.0
    assert rep.sigma_used == [1.0]
    a = ln_equivalent_matrix([1.0, 1.0], 1.0).values
    assert np.array_equal(a @ np.array([1.0, 3.0]), [-1.0, 1.0])


def test_decomposition_preconditions():
    with pytest.raises(ArgumentError):
        check_ln_decomposition([2.0, 2.0, 2.0], [1.0, 1.0, 1.0])
    with pytest.raises(ArgumentError):
        check_ln_decomposition([1.0], [1.0])


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 64), st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_decomposition_property(n, d, seed):
    r = make_rng(seed)
    v = r.uniform(-1e3, 1e3, size=(n, d))
    rep = check_ln_decomposition(v, r.uniform(-2, 2, size=(n, d)))
    assert rep.max_abs_diff <= 1e-9
    assert len(rep.per_dim_diffs) == len(rep.sigma_used) == d


def test_sweep_is_reproducible():
    assert decomposition_sweep(50, seed=3) == decomposition_sweep(50, seed=3)


def test_gradcheck_linear_tight():
    rng = make_rng(0)
    p = L.init_linear(4, 3, rng)
    p = L.LinearParams(p.w, np.full(3, 0.3))
    v = rng.uniform(0.2, 1.0, size=(2, 5, 4))
    rep = gradcheck("linear", p, v, probes=50, rng=rng)
    assert rep.max_rel_err <= 1e-6


def test_gradcheck_reports_wrong_gradient(monkeypatch):
    name, p, v = next(c for c in layer_cases(0) if c[0] == "layer_norm[vertex+feature]")
    real = L._BACKWARDS["layer_norm"]

    def broken(c, g):
        dv, grads = real(c, g)
        return dv * 1.01, grads

    monkeypatch.setitem(L._BACKWARDS, "layer_norm", broken)
    rep = gradcheck(name, p, v, probes=100, rng=make_rng(1))
    assert not rep.passed


def test_gradcheck_rejects_kinks():
    p = L.LinearParams(np.eye(2), np.zeros(2))
    with pytest.raises(ArgumentError):
        gradcheck("linear", p, np.array([[0.0, 1.0]]), probes=5)


def test_every_layer_meets_tight_tolerance():
    reports = gradcheck_all(seed=0, probes=100)
    names = {r.layer for r in reports}
    assert {"linear_relu", "layer_norm[vertex]", "layer_norm[vertex+feature]",
            "graph_conv"} <= names
    assert {f"gfs[{v.value}]" for v in L.Variant} <= names
    for r in reports:
        assert r.max_rel_err <= 1e-6, r
