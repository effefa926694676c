"""Forward and backward passes for the learnable blocks.

Every ``*_forward`` returns ``(output, tape)``. The tape caches what the
reverse pass needs; :func:`backward` consumes it exactly once and returns
``(input_grad, param_grads)`` where ``param_grads`` is keyed like the
parameter container's :meth:`arrays`.

Inputs are laid out ``(..., N, D)``: any number of leading axes (time steps,
batch), then the vertex axis, then the feature axis.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Any, Callable

import numpy as np

from .adjacency import AdjacencyMatrix
from .errors import ArgumentError, DimensionError, StateError
from .tensor import as_tensor

AXIS_INDEX = {"vertex": -2, "feature": -1}
DEFAULT_EPSILON = 1e-5


class Variant(str, enum.Enum):
    FULL = "Full"
    MEAN = "Mean"
    MEAN_P = "MeanP"
    NO_LNP = "NoLNP"
    NO_RES = "NoRes"
    LNN_NO_P = "LNNNoP"


@dataclass
class Tape:
    kind: str
    cache: dict[str, Any]
    consumed: bool = False


# ---------------------------------------------------------------- containers


@dataclass(frozen=True)
class LayerNormSpec:
    normalized_axes: tuple[str, ...]
    affine_w: np.ndarray
    affine_b: np.ndarray
    epsilon: float = DEFAULT_EPSILON
    affine_enabled: bool = True

    def __post_init__(self):
        axes = tuple(self.normalized_axes)
        if not axes or any(a not in AXIS_INDEX for a in axes) or len(set(axes)) != len(axes):
            raise ArgumentError(f"normalized_axes must be a subset of {{vertex, feature}}, got {axes}")
        # canonical order: vertex before feature
        axes = tuple(a for a in ("vertex", "feature") if a in axes)
        object.__setattr__(self, "normalized_axes", axes)
        w, b = as_tensor(self.affine_w), as_tensor(self.affine_b)
        if w.shape != b.shape or w.ndim != len(axes):
            raise DimensionError(f"affine shapes {w.shape}/{b.shape} do not match axes {axes}")
        if self.epsilon < 0:
            raise ArgumentError("epsilon must be >= 0")
        object.__setattr__(self, "affine_w", w)
        object.__setattr__(self, "affine_b", b)

    def arrays(self) -> dict[str, np.ndarray]:
        return {"w": self.affine_w, "b": self.affine_b}

    def with_arrays(self, arrays) -> "LayerNormSpec":
        return replace(self, affine_w=arrays.get("w", self.affine_w),
                       affine_b=arrays.get("b", self.affine_b))


@dataclass(frozen=True)
class LinearParams:
    w: np.ndarray
    b: np.ndarray

    def arrays(self):
        return {"w": self.w, "b": self.b}

    def with_arrays(self, arrays):
        return replace(self, w=arrays.get("w", self.w), b=arrays.get("b", self.b))


@dataclass(frozen=True)
class GraphConvParams:
    adjacency: AdjacencyMatrix
    weight: np.ndarray

    def arrays(self):
        return {"weight": self.weight}

    def with_arrays(self, arrays):
        return replace(self, weight=arrays.get("weight", self.weight))


@dataclass(frozen=True)
class GfsParams:
    w_s1: np.ndarray
    b_s1: np.ndarray
    ln: LayerNormSpec
    w_res: np.ndarray
    b_res: np.ndarray
    variant: Variant = Variant.FULL

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        if self.w_s1.shape != self.w_res.shape or self.b_s1.shape != self.b_res.shape:
            raise DimensionError("w_s1/w_res and b_s1/b_res must share shapes")
        if self.ln.normalized_axes != ("vertex", "feature"):
            raise ArgumentError("GFS layer norm must normalize over vertex and feature axes")
        if self.ln.affine_w.shape[1] != self.w_s1.shape[1]:
            raise DimensionError("layer-norm affine width must equal d_out")

    @property
    def n(self) -> int:
        return self.ln.affine_w.shape[0]

    @property
    def affine_enabled(self) -> bool:
        return self.ln.affine_enabled and self.variant is not Variant.LNN_NO_P

    def arrays(self):
        return {"w_s1": self.w_s1, "b_s1": self.b_s1,
                "w_s2": self.ln.affine_w, "b_s2": self.ln.affine_b,
                "w_res": self.w_res, "b_res": self.b_res}

    def with_arrays(self, arrays):
        get = lambda k: arrays.get(k, getattr(self, k))  # noqa: E731
        ln = replace(self.ln, affine_w=arrays.get("w_s2", self.ln.affine_w),
                     affine_b=arrays.get("b_s2", self.ln.affine_b))
        return replace(self, w_s1=get("w_s1"), b_s1=get("b_s1"), ln=ln,
                       w_res=get("w_res"), b_res=get("b_res"))


# -------------------------------------------------------------- initializers


def xavier_uniform(d_in: int, d_out: int, rng: np.random.Generator) -> np.ndarray:
    bound = np.sqrt(6.0 / (d_in + d_out))
    return rng.uniform(-bound, bound, size=(d_in, d_out))


def init_linear(d_in, d_out, rng) -> LinearParams:
    return LinearParams(xavier_uniform(d_in, d_out, rng), np.zeros(d_out))


def init_layer_norm(shape, axes=("vertex", "feature"), epsilon=DEFAULT_EPSILON,
                    affine_enabled=True) -> LayerNormSpec:
    return LayerNormSpec(tuple(axes), np.ones(shape), np.zeros(shape),
                         epsilon, affine_enabled)


def init_graph_conv(adjacency: AdjacencyMatrix, d_in, d_out, rng) -> GraphConvParams:
    return GraphConvParams(adjacency, xavier_uniform(d_in, d_out, rng))


def init_gfs(n, d_in, d_out, rng, variant=Variant.FULL, epsilon=DEFAULT_EPSILON,
             affine_enabled=True) -> GfsParams:
    variant = Variant(variant)
    if variant is Variant.LNN_NO_P:
        affine_enabled = False
    w_s1 = xavier_uniform(d_in, d_out, rng)
    w_res = xavier_uniform(d_in, d_out, rng)
    ln = init_layer_norm((n, d_out), epsilon=epsilon, affine_enabled=affine_enabled)
    return GfsParams(w_s1, np.zeros(d_out), ln, w_res, np.zeros(d_out), variant)


def init_params(kind: str, rng: np.random.Generator, **dims):
    """Dispatch to the initializer for ``kind`` (linear, graph_conv, gfs)."""
    inits: dict[str, Callable] = {
        "linear": init_linear,
        "graph_conv": init_graph_conv,
        "gfs": init_gfs,
    }
    if kind not in inits:
        raise ArgumentError(f"unknown layer kind {kind!r}")
    return inits[kind](rng=rng, **dims)


# ------------------------------------------------------------------ forwards


def _check_last(v, w, name):
    if v.shape[-1] != w.shape[0]:
        raise DimensionError(f"{name}: input {v.shape} does not conform with weight {w.shape}")


def linear_relu_forward(v, w, b):
    v = as_tensor(v)
    _check_last(v, w, "linear")
    if b.shape != (w.shape[1],):
        raise DimensionError(f"linear: bias {b.shape} does not match weight {w.shape}")
    z = _dense(v, w) + b
    out = np.maximum(z, 0.0)
    return out, Tape("linear_relu", {"v": v, "w": w, "z": z})


def _dense(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    # one 2-D GEMM over all leading axes
    return (x.reshape(-1, x.shape[-1]) @ w).reshape(*x.shape[:-1], w.shape[1])


def _ln_axes(spec: LayerNormSpec, ndim: int) -> tuple[int, ...]:
    if ndim < 2:
        raise DimensionError("layer norm input needs vertex and feature axes")
    return tuple(ndim + AXIS_INDEX[a] for a in spec.normalized_axes)


def _affine_view(arr: np.ndarray, spec: LayerNormSpec) -> np.ndarray:
    # reshape affine params so they broadcast over (..., N, D)
    if spec.normalized_axes == ("vertex",):
        return arr[:, None]
    return arr


def _check_affine(v, spec):
    extents = tuple(v.shape[AXIS_INDEX[a]] for a in spec.normalized_axes)
    if spec.affine_w.shape != extents:
        raise DimensionError(
            f"layer norm affine shape {spec.affine_w.shape} does not match "
            f"input extents {extents} (input shape {v.shape})")


def layer_norm_forward(v, spec: LayerNormSpec):
    v = as_tensor(v)
    axes = _ln_axes(spec, v.ndim)
    _check_affine(v, spec)
    mean = v.mean(axis=axes, keepdims=True)
    centered = v - mean
    var = np.square(centered).mean(axis=axes, keepdims=True)
    if spec.epsilon == 0 and np.any(var == 0):
        raise ZeroDivisionError("layer norm over a constant slice with epsilon = 0")
    std = np.sqrt(var + spec.epsilon)
    xhat = centered / std
    if spec.affine_enabled:
        out = xhat * _affine_view(spec.affine_w, spec) + _affine_view(spec.affine_b, spec)
    else:
        out = xhat
    return out, Tape("layer_norm", {"xhat": xhat, "std": std, "axes": axes, "spec": spec})


def graph_conv_forward(v, params: GraphConvParams):
    """``A @ V @ W'`` applied to every leading slice of ``v``."""
    v = as_tensor(v)
    a = params.adjacency.values
    if v.ndim < 2 or v.shape[-2] != a.shape[0]:
        raise DimensionError(f"graph conv: adjacency is {a.shape}, input is {v.shape}")
    _check_last(v, params.weight, "graph conv")
    av = _vertex_mix(a, v)
    return _dense(av, params.weight), Tape("graph_conv", {"v": v, "av": av, "params": params})


def _vertex_mix(a: np.ndarray, v: np.ndarray) -> np.ndarray:
    # one GEMM: (N, N) @ (N, lead * D)
    n, d = v.shape[-2], v.shape[-1]
    lead = v.shape[:-2]
    flat = np.moveaxis(v.reshape(-1, n, d), 1, 0).reshape(n, -1)
    mixed = (a @ flat).reshape(n, -1, d)
    return np.ascontiguousarray(np.moveaxis(mixed, 0, 1)).reshape(*lead, n, d)


def _vertex_mean(x: np.ndarray) -> np.ndarray:
    return np.broadcast_to(x.mean(axis=-2, keepdims=True), x.shape).copy()


def _gfs(v, params: GfsParams):
    v = as_tensor(v)
    if v.ndim < 2 or v.shape[-2] != params.n:
        raise DimensionError(
            f"GFS affine parameters are built for N={params.n} vertices, input has shape {v.shape}")
    _check_last(v, params.w_s1, "GFS")
    variant = params.variant
    vp, t_s1 = linear_relu_forward(v, params.w_s1, params.b_s1)
    cache: dict[str, Any] = {"params": params, "t_s1": t_s1, "vp": vp}
    w2, b2 = params.ln.affine_w, params.ln.affine_b
    if variant in (Variant.FULL, Variant.NO_RES, Variant.LNN_NO_P):
        ln = params.ln if params.affine_enabled else replace(params.ln, affine_enabled=False)
        vhat, cache["t_ln"] = layer_norm_forward(vp, ln)
    elif variant is Variant.MEAN:
        vhat = _vertex_mean(vp)
    elif variant is Variant.MEAN_P:
        cache["agg"] = _vertex_mean(vp)
        vhat = cache["agg"] * w2 + b2
    else:  # NoLNP
        cache["agg"] = vp
        vhat = vp * w2 + b2
    cache["vhat"] = vhat
    if variant is Variant.NO_RES:
        return vhat, Tape("gfs", cache)
    vres, cache["t_res"] = linear_relu_forward(v, params.w_res, params.b_res)
    return vres + vhat, Tape("gfs", cache)


def gfs_forward(v, params: GfsParams):
    """Graph-free spatial block (full form).

    ``V' = ReLU(V W_s1 + b_s1)``; ``V_hat`` is the layer norm of ``V'`` over
    the vertex and feature axes of each leading slice, with per-(vertex,
    feature) affine ``W_s2, B_s2``; the output is ``ReLU(V W_res + b_res) +
    V_hat``.
    """
    if params.variant is not Variant.FULL:
        raise ArgumentError(f"gfs_forward expects the Full variant, got {params.variant.value}")
    return _gfs(v, params)


def gfs_variant_forward(v, params: GfsParams):
    """Ablated GFS forms.

    Mean: vertex mean replaces the layer norm (no affine). MeanP: vertex mean
    followed by the affine. NoLNP: affine applied to ``V'`` directly. NoRes:
    residual branch dropped. LNNNoP: layer norm without affine.
    """
    if params.variant is Variant.FULL:
        raise ArgumentError("gfs_variant_forward expects an ablation variant")
    return _gfs(v, params)


def forward(v, params):
    """Forward pass for any parameter container."""
    if isinstance(params, GfsParams):
        return _gfs(v, params)
    if isinstance(params, GraphConvParams):
        return graph_conv_forward(v, params)
    if isinstance(params, LayerNormSpec):
        return layer_norm_forward(v, params)
    if isinstance(params, LinearParams):
        return linear_relu_forward(v, params.w, params.b)
    raise ArgumentError(f"no forward pass for {type(params).__name__}")


# ----------------------------------------------------------------- backwards


def _sum_to(g: np.ndarray, ndim: int) -> np.ndarray:
    """Sum leading axes of ``g`` until it has ``ndim`` dims."""
    return g.reshape(-1, *g.shape[g.ndim - ndim:]).sum(axis=0) if g.ndim > ndim else g


def _linear_relu_backward(c, g):
    gz = np.where(c["z"] > 0, g, 0.0)
    v, w = c["v"], c["w"]
    dv = _dense(gz, w.T)
    dw = v.reshape(-1, v.shape[-1]).T @ gz.reshape(-1, gz.shape[-1])
    return dv, {"w": dw, "b": gz.reshape(-1, gz.shape[-1]).sum(axis=0)}


def _layer_norm_backward(c, g):
    spec: LayerNormSpec = c["spec"]
    xhat, std, axes = c["xhat"], c["std"], c["axes"]
    if spec.affine_enabled:
        gx = g * _affine_view(spec.affine_w, spec)
        keep = 2 if len(axes) == 2 or spec.normalized_axes == ("vertex",) else 1
        dw = _sum_to(g * xhat, keep)
        db = _sum_to(g, keep)
        if spec.normalized_axes == ("vertex",):
            dw, db = dw.sum(axis=-1), db.sum(axis=-1)
    else:
        gx = g
        dw = np.zeros_like(spec.affine_w)
        db = np.zeros_like(spec.affine_b)
    dv = (gx - gx.mean(axis=axes, keepdims=True)
          - xhat * (gx * xhat).mean(axis=axes, keepdims=True)) / std
    return dv, {"w": dw, "b": db}


def _graph_conv_backward(c, g):
    params: GraphConvParams = c["params"]
    av = c["av"]
    d = av.shape[-1]
    dw = av.reshape(-1, d).T @ g.reshape(-1, g.shape[-1])
    dv = _vertex_mix(params.adjacency.values.T, _dense(g, params.weight.T))
    return dv, {"weight": dw}


def _gfs_backward(c, g):
    params: GfsParams = c["params"]
    variant = params.variant
    grads = {k: np.zeros_like(a) for k, a in params.arrays().items()}
    dv = np.zeros(c["t_s1"].cache["v"].shape)
    if variant is not Variant.NO_RES:
        dv_res, pg = backward(c["t_res"], g)
        dv += dv_res
        grads["w_res"], grads["b_res"] = pg["w"], pg["b"]
    if "t_ln" in c:
        dvp, pg = backward(c["t_ln"], g)
        if params.affine_enabled:
            grads["w_s2"], grads["b_s2"] = pg["w"], pg["b"]
    elif variant is Variant.MEAN:
        dvp = _vertex_mean(g)
    else:
        w2 = params.ln.affine_w
        grads["w_s2"] = _sum_to(g * c["agg"], 2)
        grads["b_s2"] = _sum_to(g, 2)
        dvp = g * w2
        if variant is Variant.MEAN_P:
            dvp = _vertex_mean(dvp)
    dv_s1, pg = backward(c["t_s1"], dvp)
    grads["w_s1"], grads["b_s1"] = pg["w"], pg["b"]
    return dv + dv_s1, grads


_BACKWARDS = {
    "linear_relu": _linear_relu_backward,
    "layer_norm": _layer_norm_backward,
    "graph_conv": _graph_conv_backward,
    "gfs": _gfs_backward,
}


def backward(tape: Tape, out_grad):
    """Reverse pass for one layer application; consumes ``tape``."""
    if tape.consumed:
        raise StateError(f"{tape.kind} tape has already been consumed")
    out_grad = as_tensor(out_grad)
    expected = _output_shape(tape)
    if out_grad.shape != expected:
        raise DimensionError(f"out_grad shape {out_grad.shape} != forward output {expected}")
    tape.consumed = True
    return _BACKWARDS[tape.kind](tape.cache, out_grad)


def _output_shape(tape: Tape) -> tuple[int, ...]:
    c = tape.cache
    if tape.kind == "linear_relu":
        return c["z"].shape
    if tape.kind == "layer_norm":
        return c["xhat"].shape
    if tape.kind == "graph_conv":
        return c["av"].shape[:-1] + (c["params"].weight.shape[1],)
    return c["vhat"].shape


# ------------------------------------------------------------- serialization

PARAMS_FORMAT = "graphfree-params/1"


def save_params(path, arrays: dict) -> None:
    """Write named tensors as JSON: ``{"format", "tensors": {name: {shape, data}}}``.

    Values are written with ``repr`` precision, so a load restores them
    bit-for-bit.
    """
    import json

    tensors = {name: {"shape": list(np.shape(a)), "data": np.asarray(a, dtype=float).ravel().tolist()}
               for name, a in sorted(arrays.items())}
    with open(path, "w") as fh:
        json.dump({"format": PARAMS_FORMAT, "tensors": tensors}, fh)


def load_params(path) -> dict[str, np.ndarray]:
    import json

    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("format") != PARAMS_FORMAT:
        raise ArgumentError(f"{path}: not a {PARAMS_FORMAT} file")
    return {name: np.array(t["data"], dtype=float).reshape(t["shape"])
            for name, t in payload["tensors"].items()}
