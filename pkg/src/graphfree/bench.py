"""Wall-clock scaling benchmark: single GFS layer vs single graph convolution.

Each configuration is timed as ``repeats`` runs of ``batches`` forward
passes after ``warmups`` untimed runs; the median run is recorded. BLAS is
pinned to one thread for the whole sweep. Adjacency construction and input
generation happen outside the timed region.
"""

from __future__ import annotations

import csv
import ctypes
import ctypes.util
import json
import logging
import statistics
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import layers as L
from .adjacency import gen_uniform
from .errors import ArgumentError
from .tensor import make_rng

log = logging.getLogger(__name__)

KINDS = ("Gfs", "GraphConv")
CSV_COLUMNS = ("kind", "n", "d_in", "d_out", "batch_size", "batches", "wall_seconds")
FIT_COLUMNS = ("kind", "slope", "intercept", "r_squared", "points")
DEFAULT_PRESET = (100, 250, 500, 1000, 2000)
SCALING_PRESET = (256, 512, 1024, 2048, 4096)


@dataclass
class BenchRecord:
    layer_kind: str
    n: int
    d_in: int
    d_out: int
    batch_size: int
    batches: int
    wall_seconds: float | None
    repeats: int
    warmups: int
    checksum: float | None = None
    failed: bool = False


@dataclass
class ScalingFit:
    layer_kind: str
    slope: float
    intercept: float
    r_squared: float
    points: int


_M_TRIM_THRESHOLD, _M_MMAP_THRESHOLD = -1, -3


def pin_allocator() -> bool:
    """Keep large arrays on the glibc heap instead of fresh mmap pages.

    Without this, every array above the mmap threshold (32 MB at most) is
    page-faulted in anew on each call, adding a step in wall time at the n
    where layer activations cross it. Returns False when not on glibc.
    """
    name = ctypes.util.find_library("c")
    if not name:
        return False
    try:
        libc = ctypes.CDLL(name)
        mallopt = libc.mallopt
    except (OSError, AttributeError):
        return False
    big = ctypes.c_int(2**31 - 1)
    return bool(mallopt(_M_MMAP_THRESHOLD, big)) and bool(mallopt(_M_TRIM_THRESHOLD, big))


def _build(kind: str, n: int, d_in: int, d_out: int, rng):
    if kind == "GraphConv":
        return L.init_graph_conv(gen_uniform(n), d_in, d_out, rng)
    if kind == "Gfs":
        return L.init_gfs(n, d_in, d_out, rng)
    raise ArgumentError(f"unknown layer kind {kind!r}")


def _run(params, x, batches, with_backward):
    out = None
    for _ in range(batches):
        out, tape = L.forward(x, params)
        if with_backward:
            L.backward(tape, out)
    return out


def bench_layer(kind: str, n_list, d_in: int = 64, d_out: int = 64, batch_size: int = 64,
                batches: int = 1, repeats: int = 5, warmups: int = 2, seed: int = 0,
                with_backward: bool = False) -> list[BenchRecord]:
    """Median-of-repeats forward time of one layer for each vertex count."""
    n_list = [int(n) for n in n_list]
    if n_list != sorted(n_list):
        raise ArgumentError("n_list must be ascending")
    if repeats < 3:
        raise ArgumentError("repeats must be >= 3")
    pin_allocator()
    records = []
    for n in n_list:
        rng = make_rng(seed, n)
        common = dict(layer_kind=kind, n=n, d_in=d_in, d_out=d_out, batch_size=batch_size,
                      batches=batches, repeats=repeats, warmups=warmups)
        try:
            params = _build(kind, n, d_in, d_out, rng)
            x = rng.standard_normal((batch_size, n, d_in))
            with threadpool_limits(limits=1):
                for _ in range(warmups):
                    _run(params, x, batches, with_backward)
                samples = []
                for _ in range(repeats):
                    start = time.perf_counter()
                    out = _run(params, x, batches, with_backward)
                    samples.append(time.perf_counter() - start)
            checksum = float(np.sum(out))
            records.append(BenchRecord(wall_seconds=statistics.median(samples),
                                       checksum=checksum, **common))
        except MemoryError:
            log.warning("%s at n=%d ran out of memory; marked failed", kind, n)
            records.append(BenchRecord(wall_seconds=None, failed=True, **common))
        log.info("%s n=%d: %s s", kind, n, records[-1].wall_seconds)
    return records


def fit_scaling_exponent(records) -> ScalingFit:
    """Least-squares line through ``(log n, log wall_seconds)``."""
    ok = [r for r in records if not r.failed and r.wall_seconds]
    ns = {r.n for r in ok}
    if len(ok) < 3 or len(ns) < 3:
        raise ArgumentError("need at least 3 records with distinct n to fit an exponent")
    kinds = {r.layer_kind for r in ok}
    if len(kinds) != 1:
        raise ArgumentError(f"records mix layer kinds: {sorted(kinds)}")
    x = np.log([r.n for r in ok])
    y = np.log([r.wall_seconds for r in ok])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum(np.square(y - y.mean())))
    r2 = 1.0 - float(np.sum(np.square(resid))) / ss_tot if ss_tot > 0 else 1.0
    return ScalingFit(kinds.pop(), float(slope), float(intercept), r2, len(ok))


# ------------------------------------------------------------------ emitters


def _csv_value(v):
    if v is None:
        return ""
    return repr(v) if isinstance(v, float) else str(v)


def emit_report(records, fits, path, fmt: str = "json", meta: dict | None = None) -> Path:
    """Write records and fits as JSON, or as CSV (fits go to ``<stem>.fits.csv``)."""
    path = Path(path)
    if fmt == "json":
        payload = {"meta": meta or {}, "records": [asdict(r) for r in records],
                   "fits": [asdict(f) for f in fits]}
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    elif fmt == "csv":
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_COLUMNS)
            for r in records:
                w.writerow([_csv_value(v) for v in (r.layer_kind, r.n, r.d_in, r.d_out,
                                                    r.batch_size, r.batches, r.wall_seconds)])
        fit_path = path.with_name(path.stem + ".fits.csv")
        with open(fit_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(FIT_COLUMNS)
            for f in fits:
                w.writerow([_csv_value(getattr(f, c if c != "kind" else "layer_kind"))
                            for c in FIT_COLUMNS])
    else:
        raise ArgumentError(f"unknown report format {fmt!r}")
    return path


def load_report(path):
    """Inverse of the JSON form of :func:`emit_report`."""
    payload = json.loads(Path(path).read_text())
    names = {f.name for f in fields(BenchRecord)}
    records = [BenchRecord(**{k: v for k, v in r.items() if k in names})
               for r in payload["records"]]
    fits = [ScalingFit(**f) for f in payload["fits"]]
    return records, fits, payload.get("meta", {})
