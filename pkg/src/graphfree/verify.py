"""Executable checks: layer norm as a graph convolution, and gradient checks.

The decomposition check runs in the regime where the identity
``LN(v) = (Diag(w) / sigma) (I - R) v`` holds exactly: one feature column at
a time, statistics over the vertex axis only, no bias, no epsilon.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import layers as L
from .adjacency import gen_random, ln_equivalent_matrix
from .errors import ArgumentError
from .tensor import as_tensor, make_rng, matmul

KINK_MARGIN = 1e-3
DENOM_FLOOR = 1e-8


@dataclass
class DecompositionReport:
    n: int
    max_abs_diff: float
    sigma_used: list[float]
    per_dim_diffs: list[float]

    def to_dict(self):
        return asdict(self)


@dataclass
class GradCheckReport:
    layer: str
    probes: int
    max_rel_err: float
    worst_coordinate: list
    tol: float
    passed: bool = field(init=False)

    def __post_init__(self):
        self.passed = bool(self.max_rel_err <= self.tol)

    def to_dict(self):
        return asdict(self)


def check_ln_decomposition(v, w) -> DecompositionReport:
    """Compare vertex-axis layer norm against the product ``A_ln @ v``.

    ``v`` is ``(n,)`` or ``(n, D)``; ``w`` is ``(n,)`` (shared by every
    feature column) or ``(n, D)``.
    """
    v = as_tensor(v)
    if v.ndim == 1:
        v = v[:, None]
    w = as_tensor(w)
    if w.ndim == 1:
        w = np.repeat(w[:, None], v.shape[1], axis=1)
    n, dims = v.shape
    if n < 2:
        raise ArgumentError("decomposition needs at least 2 vertices")
    if w.shape != v.shape:
        raise ArgumentError(f"affine shape {w.shape} does not match input {v.shape}")
    sigmas, diffs = [], []
    for d in range(dims):
        col = v[:, d : d + 1]
        sigma = float(np.sqrt(np.square(col - col.mean()).mean()))
        if sigma == 0:
            raise ArgumentError(f"feature column {d} is constant; sigma = 0")
        spec = L.LayerNormSpec(("vertex",), w[:, d], np.zeros(n), epsilon=0.0)
        ln_out, _ = L.layer_norm_forward(col, spec)
        a_ln = ln_equivalent_matrix(w[:, d], sigma)
        mixed = matmul(a_ln.values, col)
        sigmas.append(sigma)
        diffs.append(float(np.max(np.abs(ln_out - mixed))))
    return DecompositionReport(n, max(diffs), sigmas, diffs)


def decomposition_sweep(cases: int = 1000, seed: int = 0, max_n: int = 64,
                        max_dims: int = 8, scale: float = 1e3) -> dict:
    """Randomized sweep of :func:`check_ln_decomposition`."""
    rng = make_rng(seed, 1)
    worst = None
    for _ in range(cases):
        n = int(rng.integers(2, max_n + 1))
        dims = int(rng.integers(1, max_dims + 1))
        v = rng.uniform(-scale, scale, size=(n, dims))
        w = rng.uniform(-2.0, 2.0, size=(n, dims))
        rep = check_ln_decomposition(v, w)
        if worst is None or rep.max_abs_diff > worst.max_abs_diff:
            worst = rep
    return {"cases": cases, "seed": seed,
            "max_abs_diff": worst.max_abs_diff if worst else 0.0,
            "worst_case": worst.to_dict() if worst else None}


# ------------------------------------------------------------- gradient check


def _kink_distance(tape: L.Tape) -> float:
    """Smallest |pre-activation| over every ReLU recorded in ``tape``."""
    c = tape.cache
    dist = np.inf
    if "z" in c:
        dist = float(np.min(np.abs(c["z"])))
    for key in ("t_s1", "t_res"):
        if key in c:
            dist = min(dist, _kink_distance(c[key]))
    return dist


def gradcheck(name: str, params, v, *, probes: int = 100, step: float = 1e-5,
              tol: float = 1e-4, rng: np.random.Generator | None = None) -> GradCheckReport:
    """Central finite differences against :func:`layers.backward`.

    The scalar probed is ``sum(forward(v) * R)`` for a fixed random ``R``.
    Coordinates are drawn uniformly from the input and every parameter array.
    """
    if step <= 0:
        raise ArgumentError("step must be positive")
    rng = rng if rng is not None else make_rng(0)
    v = as_tensor(v)
    out, tape = L.forward(v, params)
    if _kink_distance(tape) < KINK_MARGIN:
        raise ArgumentError("probe point lies within the ReLU kink margin")
    proj = rng.standard_normal(out.shape)
    dv, pgrads = L.backward(tape, proj)

    arrays = {"input": v, **{k: as_tensor(a) for k, a in params.arrays().items()}}
    analytic = {"input": dv, **pgrads}
    names = list(arrays)
    sizes = np.array([arrays[k].size for k in names])
    picks = rng.choice(sizes.sum(), size=probes, replace=True)
    offsets = np.concatenate([[0], np.cumsum(sizes)])

    def evaluate(key, flat_idx, delta):
        arr = arrays[key].copy()
        arr.reshape(-1)[flat_idx] += delta
        if key == "input":
            return L.forward(arr, params)[0]
        return L.forward(v, params.with_arrays({key: arr}))[0]

    worst, worst_coord = 0.0, []
    for pick in picks:
        i = int(np.searchsorted(offsets, pick, side="right") - 1)
        key, flat_idx = names[i], int(pick - offsets[i])
        diff = evaluate(key, flat_idx, step) - evaluate(key, flat_idx, -step)
        fd = float(np.sum(diff * proj) / (2 * step))
        a = float(analytic[key].reshape(-1)[flat_idx])
        err = abs(a - fd) / max(abs(a), abs(fd), DENOM_FLOOR)
        if err > worst or not worst_coord:
            worst = err
            worst_coord = [key, [int(x) for x in np.unravel_index(flat_idx, arrays[key].shape)]]
    return GradCheckReport(name, int(probes), worst, worst_coord, tol)


def _kink_free_input(shape, params, rng, tries=200):
    for _ in range(tries):
        v = rng.standard_normal(shape)
        _, tape = L.forward(v, params)
        if _kink_distance(tape) >= KINK_MARGIN:
            return v
    raise ArgumentError("could not sample a probe point away from ReLU kinks")


def _jitter(params, rng):
    # random (non-default) affine and bias values so no gradient is trivially zero
    arrays = {k: a + 0.3 * rng.standard_normal(a.shape) for k, a in params.arrays().items()}
    return params.with_arrays(arrays)


def layer_cases(seed: int = 0, q: int = 3, n: int = 5, d_in: int = 4, d_out: int = 3):
    """Random (name, params, input) triples covering every layer and GFS variant."""
    rng = make_rng(seed, 2)
    cases = []
    lin = _jitter(L.init_linear(d_in, d_out, rng), rng)
    cases.append(("linear_relu", lin, (q, n, d_in)))
    for axes, shape in ((("vertex",), (n,)), (("vertex", "feature"), (n, d_in))):
        spec = _jitter(L.init_layer_norm(shape, axes), rng)
        cases.append((f"layer_norm[{'+'.join(axes)}]", spec, (q, n, d_in)))
    gc = L.init_graph_conv(gen_random(n, rng), d_in, d_out, rng)
    cases.append(("graph_conv", gc, (q, n, d_in)))
    for variant in L.Variant:
        p = _jitter(L.init_gfs(n, d_in, d_out, rng, variant=variant), rng)
        cases.append((f"gfs[{variant.value}]", p, (q, n, d_in)))
    return [(name, p, _kink_free_input(shape, p, rng)) for name, p, shape in cases]


def gradcheck_all(seed: int = 0, probes: int = 100, step: float = 1e-5,
                  tol: float = 1e-4) -> list[GradCheckReport]:
    rng = make_rng(seed, 3)
    return [gradcheck(name, p, v, probes=probes, step=step, tol=tol, rng=rng)
            for name, p, v in layer_cases(seed)]
