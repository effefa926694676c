"""Training harness and the experiment suites.

The forecaster is deliberately small: one spatial layer (graph convolution
or a GFS block) followed by a linear temporal head shared by all vertices.
The head sees, per vertex, the raw input window concatenated with the
spatial layer's output over the same window and maps it to the forecast
window.
"""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import layers as L
from .adjacency import AdjacencyMatrix, from_kind, row_normalize
from .config import NodeClassConfig, TrainConfig
from .data import NodeClassDataset, StDataset, windowize
from .errors import ArgumentError, TrainingError
from .metrics import evaluate
from .optim import AdamConfig, AdamState, adam_step
from .tensor import make_rng

log = logging.getLogger(__name__)

# substream ids under the run seed
_INIT, _ADJ, _SHUFFLE = 10, 11, 12


@dataclass
class ExperimentReport:
    config: dict
    train_loss: list[float]
    metrics: dict  # split -> MetricsRecord dict
    horizon: list[dict]  # test metrics per forecast step
    best_epoch: int
    wall_time: float = field(default=0.0, compare=False)

    def data(self) -> dict:
        """Deterministic part of the report (no timings)."""
        d = asdict(self)
        d.pop("wall_time")
        return d


# ---------------------------------------------------------------- forecaster


class Forecaster:
    """Spatial layer + linear temporal head; parameters held as named arrays."""

    def __init__(self, spatial, head_w, head_b, window_out):
        self.spatial = spatial
        self.head_w = head_w
        self.head_b = head_b
        self.window_out = window_out

    @classmethod
    def build(cls, config: TrainConfig, n: int, d: int, adjacency: AdjacencyMatrix | None,
              rng: np.random.Generator) -> "Forecaster":
        h = config.hidden_dim
        if config.spatial_kind == "GraphConv":
            spatial = L.init_graph_conv(adjacency, d, h, rng)
        else:
            spatial = L.init_gfs(n, d, h, rng, variant=config.gfs_variant,
                                 epsilon=config.epsilon, affine_enabled=config.ln_affine)
        fan_in = config.window_in * (d + h)
        head_w = L.xavier_uniform(fan_in, config.window_out * d, rng)
        return cls(spatial, head_w, np.zeros(config.window_out * d), config.window_out)

    def arrays(self) -> dict:
        out = {f"spatial.{k}": a for k, a in self.spatial.arrays().items()}
        out["head.w"] = self.head_w
        out["head.b"] = self.head_b
        return out

    def with_arrays(self, arrays: dict) -> "Forecaster":
        spatial = self.spatial.with_arrays(
            {k.split(".", 1)[1]: a for k, a in arrays.items() if k.startswith("spatial.")})
        return Forecaster(spatial, arrays["head.w"], arrays["head.b"], self.window_out)

    def forward(self, x):
        """``x``: (B, Q, N, D) -> prediction (B, Q', N, D) and a cache."""
        b, q, n, d = x.shape
        hid, tape = L.forward(x, self.spatial)
        feats = np.concatenate([x, hid], axis=-1)  # (B, Q, N, D+h)
        flat = feats.transpose(0, 2, 1, 3).reshape(b, n, -1)
        out = flat @ self.head_w + self.head_b
        pred = out.reshape(b, n, self.window_out, d).transpose(0, 2, 1, 3)
        return pred, (tape, flat, feats.shape)

    def backward(self, cache, g_pred):
        tape, flat, fshape = cache
        b, q, n, dh = fshape
        d = g_pred.shape[-1]
        g_out = g_pred.transpose(0, 2, 1, 3).reshape(b, n, -1)
        grads = {"head.w": flat.reshape(-1, flat.shape[-1]).T @ g_out.reshape(-1, g_out.shape[-1]),
                 "head.b": g_out.reshape(-1, g_out.shape[-1]).sum(axis=0)}
        g_feats = (g_out @ self.head_w.T).reshape(b, n, q, dh).transpose(0, 2, 1, 3)
        _, pgrads = L.backward(tape, np.ascontiguousarray(g_feats[..., d:]))
        grads.update({f"spatial.{k}": a for k, a in pgrads.items()})
        return grads

    def predict(self, x, batch_size=256):
        parts = [self.forward(x[i : i + batch_size])[0] for i in range(0, len(x), batch_size)]
        return np.concatenate(parts) if parts else np.empty((0,) + x.shape[1:])


def _mae_loss(pred, target):
    diff = pred - target
    return float(np.mean(np.abs(diff))), np.sign(diff) / diff.size


def _resolve_adjacency(dataset: StDataset, config: TrainConfig):
    if config.spatial_kind != "GraphConv":
        return None
    rng = make_rng(config.seed, _ADJ)
    return from_kind(config.adjacency_kind, dataset.truth_graph, dataset.n, rng)


def train_forecaster(dataset: StDataset, config: TrainConfig,
                     checkpoint=None) -> ExperimentReport:
    """Train with MAE on normalized values; select the epoch with best val MAE.

    With ``checkpoint`` set, the selected parameters are saved there.
    """
    started = time.perf_counter()
    splits = {}
    for name in ("train", "val", "test"):
        x, y = windowize(dataset, name, config.window_in, config.window_out)
        if len(x) == 0:
            raise ArgumentError(f"{name} split yields no windows")
        splits[name] = (x, y)
    x_train, y_train = splits["train"]
    n, d = dataset.n, dataset.values.shape[-1]

    model = Forecaster.build(config, n, d, _resolve_adjacency(dataset, config),
                             make_rng(config.seed, _INIT))
    adam = AdamConfig(config.learning_rate, config.beta1, config.beta2, config.adam_eps)
    state = AdamState()
    params = model.arrays()
    shuffle = make_rng(config.seed, _SHUFFLE)

    best = (np.inf, params, 0)
    losses = []
    for epoch in range(1, config.epochs + 1):
        order = shuffle.permutation(len(x_train))
        total, count = 0.0, 0
        for i in range(0, len(order), config.batch_size):
            idx = order[i : i + config.batch_size]
            current = model.with_arrays(params)
            pred, cache = current.forward(x_train[idx])
            loss, g = _mae_loss(pred, y_train[idx])
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch {i // config.batch_size}")
            params, state = adam_step(params, current.backward(cache, g), state, adam)
            total += loss * len(idx)
            count += len(idx)
        losses.append(total / count)
        x_val, y_val = splits["val"]
        val_mae = float(np.mean(np.abs(model.with_arrays(params).predict(x_val) - y_val)))
        if val_mae < best[0]:
            best = (val_mae, params, epoch)
        log.debug("epoch %d train %.5f val %.5f", epoch, losses[-1], val_mae)

    final = model.with_arrays(best[1])
    if checkpoint is not None:
        L.save_params(checkpoint, best[1])
    metrics, horizon = {}, []
    for name in ("val", "test"):
        x, y = splits[name]
        pred = dataset.scaler.invert(final.predict(x))
        truth = dataset.scaler.invert(y)
        metrics[name] = evaluate(truth, pred).to_dict()
        if name == "test":
            horizon = [evaluate(truth[:, s], pred[:, s]).to_dict()
                       for s in range(config.window_out)]
    return ExperimentReport(config.to_dict(), losses, metrics, horizon, best[2],
                            time.perf_counter() - started)


# --------------------------------------------------------------------- suites


def _row(label: str, report: ExperimentReport, **extra) -> dict:
    return {"label": label, **extra, "test": report.metrics["test"],
            "val": report.metrics["val"], "best_epoch": report.best_epoch,
            "first_loss": report.train_loss[0], "final_loss": report.train_loss[-1],
            "config": report.config}


SWAP_KINDS = ("True", "R", "M", "I+R", "I+M")


def run_swap_suite(dataset: StDataset, base: TrainConfig) -> dict:
    """Graph convolution trained under the true and each artificial adjacency."""
    rows, reports = [], {}
    for kind in SWAP_KINDS:
        cfg = replace(base, spatial_kind="GraphConv", adjacency_kind=kind)
        reports[kind] = rep = train_forecaster(dataset, cfg)
        rows.append(_row(kind, rep, adjacency_kind=kind))
    ref = reports["True"].metrics["test"]["mae"]
    for row in rows:
        row["mae_rel_to_true"] = row["test"]["mae"] / ref - 1.0
    return {"suite": "swap-adj", "rows": rows}


def _pct(new: float, old: float) -> float:
    return 100.0 * (new - old) / old


def run_identity_suite(dataset: StDataset, base: TrainConfig) -> dict:
    """Graph convolution with true vs identity adjacency, plus GFS (no adjacency)."""
    gc_true = train_forecaster(dataset, replace(base, spatial_kind="GraphConv", adjacency_kind="True"))
    gc_id = train_forecaster(dataset, replace(base, spatial_kind="GraphConv", adjacency_kind="I"))
    gfs = train_forecaster(dataset, replace(base, spatial_kind="Gfs", gfs_variant="Full", ln_affine=True))
    ref = gc_true.metrics["test"]
    rows = [
        _row("GraphConv", gc_true, adjacency_kind="True"),
        _row("GraphConv", gc_id, adjacency_kind="I"),
        _row("Gfs", gfs),
    ]
    rows[2]["config"] = {k: v for k, v in rows[2]["config"].items() if k != "adjacency_kind"}
    for row in rows:
        row["delta_pct"] = {m: _pct(row["test"][m], ref[m]) for m in ("mae", "rmse", "mape")}
    return {"suite": "identity", "rows": rows}


ABLATION_FORMS = {
    "Full": ("Full", True),
    "Mean": ("Mean", True),
    "MeanP": ("MeanP", True),
    "NoLNP": ("NoLNP", True),
    "NoRes": ("NoRes", True),
    "LNNNoP": ("Full", False),
}


def run_ablation_suite(dataset: StDataset, base: TrainConfig) -> dict:
    """Full GFS and its five ablations under one seed and config."""
    rows = []
    for label, (variant, affine) in ABLATION_FORMS.items():
        cfg = replace(base, spatial_kind="Gfs", gfs_variant=variant, ln_affine=affine)
        rows.append(_row(label, train_forecaster(dataset, cfg), variant=label))
    return {"suite": "ablate", "rows": rows}


# --------------------------------------------------------- node classification


def log_softmax(z):
    shifted = z - z.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def predict_labels(logits) -> np.ndarray:
    """Argmax over classes; ties go to the lowest class index."""
    return np.argmax(logits, axis=-1)


class _Stack:
    """Three spatial layers over the node set (Q = 1, vertex axis = nodes)."""

    def __init__(self, kind: str, layers: list):
        self.kind = kind
        self.layers = layers

    @classmethod
    def build(cls, kind, n, dims, adjacency, rng, epsilon=1e-5):
        if kind == "GfsStack3":
            layers = [L.init_gfs(n, a, b, rng, epsilon=epsilon) for a, b in zip(dims, dims[1:])]
        elif kind == "GcnStack3":
            layers = [L.init_graph_conv(adjacency, a, b, rng) for a, b in zip(dims, dims[1:])]
        else:
            raise ArgumentError(f"unknown stack kind {kind!r}")
        return cls(kind, layers)

    def arrays(self):
        return {f"{i}.{k}": a for i, layer in enumerate(self.layers)
                for k, a in layer.arrays().items()}

    def with_arrays(self, arrays):
        layers = [layer.with_arrays({k.split(".", 1)[1]: a for k, a in arrays.items()
                                     if k.startswith(f"{i}.")})
                  for i, layer in enumerate(self.layers)]
        return _Stack(self.kind, layers)

    def forward(self, x):
        tapes, masks = [], []
        h = x[None]
        for i, layer in enumerate(self.layers):
            h, tape = L.forward(h, layer)
            tapes.append(tape)
            if self.kind == "GcnStack3" and i < len(self.layers) - 1:
                masks.append(h > 0)
                h = np.where(masks[-1], h, 0.0)
        return h[0], (tapes, masks)

    def backward(self, cache, g):
        tapes, masks = cache
        g = g[None]
        grads = {}
        for i in reversed(range(len(self.layers))):
            if self.kind == "GcnStack3" and i < len(self.layers) - 1:
                g = np.where(masks[i], g, 0.0)
            g, pg = L.backward(tapes[i], g)
            grads.update({f"{i}.{k}": a for k, a in pg.items()})
        return grads


def train_node_classifier(dataset: NodeClassDataset, kind: str = "GfsStack3",
                          config: NodeClassConfig | None = None, seed: int = 0) -> dict:
    """Full-batch training of a 3-layer stack with NLL loss on the train mask."""
    config = config or NodeClassConfig()
    started = time.perf_counter()
    n, d = dataset.features.shape
    dims = [d, config.hidden_dim, config.hidden_dim, dataset.classes]
    adjacency = dataset.adjacency
    if kind == "GcnStack3":
        adjacency = AdjacencyMatrix(row_normalize(dataset.adjacency.values))
    model = _Stack.build(kind, n, dims, adjacency, make_rng(seed, _INIT))
    params = model.arrays()
    state = AdamState()
    adam = AdamConfig(config.learning_rate)
    train, test = dataset.train_mask, dataset.test_mask
    labels = dataset.labels
    losses, train_acc, test_acc = [], [], []
    for epoch in range(config.epochs):
        current = model.with_arrays(params)
        logits, cache = current.forward(dataset.features)
        logp = log_softmax(logits)
        loss = -float(np.mean(logp[train, labels[train]]))
        if not np.isfinite(loss):
            raise TrainingError(f"non-finite loss at epoch {epoch + 1}")
        pred = predict_labels(logits)
        losses.append(loss)
        train_acc.append(float(np.mean(pred[train] == labels[train])))
        test_acc.append(float(np.mean(pred[test] == labels[test])))
        g = np.zeros_like(logits)
        probs = np.exp(logp[train])
        probs[np.arange(len(train)), labels[train]] -= 1.0
        g[train] = probs / len(train)
        params, state = adam_step(params, current.backward(cache, g), state, adam)
    final = model.with_arrays(params)
    pred = predict_labels(final.forward(dataset.features)[0])
    counts = np.bincount(labels[train], minlength=dataset.classes)
    majority = int(np.argmax(counts))
    return {
        "kind": kind,
        "config": config.to_dict(),
        "seed": seed,
        "train_loss": losses,
        "train_accuracy_curve": train_acc,
        "test_accuracy_curve": test_acc,
        "train_accuracy": float(np.mean(pred[train] == labels[train])),
        "test_accuracy": float(np.mean(pred[test] == labels[test])),
        "majority_baseline": float(np.mean(labels[test] == majority)),
        "wall_time": time.perf_counter() - started,
    }
