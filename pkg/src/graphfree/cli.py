"""Command-line front end.

Exit status: 0 on success, 1 when a tolerance or directional check fails,
2 on usage errors (bad arguments, unreadable or invalid config).
"""

from __future__ import annotations

import argparse
import json
import logging
import platform
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import __version__
from .bench import DEFAULT_PRESET, SCALING_PRESET, bench_layer, emit_report, fit_scaling_exponent
from .config import RunConfig, load_config
from .data import StDataset, default_graph, interpolate_missing, load_csv, load_edgelist
from .data import synth_sbm_generate, synth_st_generate
from .errors import GraphFreeError
from .experiments import (run_ablation_suite, run_identity_suite, run_swap_suite,
                          train_forecaster, train_node_classifier)
from .tensor import make_rng
from .verify import decomposition_sweep, gradcheck_all

log = logging.getLogger("graphfree")

DECOMPOSITION_TOL = 1e-9
SWAP_REL_TOL = 0.10
SCALING_LIMITS = {"GraphConv": 1.7, "Gfs": 1.3, "r_squared": 0.98}


# ------------------------------------------------------------------ helpers


def build_dataset(cfg: RunConfig) -> StDataset:
    d = cfg.data
    t = cfg.train
    if d.csv:
        values = interpolate_missing(load_csv(d.csv))
        truth = load_edgelist(d.edgelist, values.shape[1], d.undirected) if d.edgelist else None
        return StDataset.from_values(values, t.window_in, t.window_out, truth,
                                     meta={"source": str(d.csv)})
    graph, _ = default_graph(d.n, make_rng(d.seed, 0), d.bandwidth, d.cutoff)
    return synth_st_generate(graph, d.t, make_rng(d.seed, 1), d.alpha, d.noise, d.amplitude,
                             obs_noise=d.obs_noise, phase_spread=d.phase_spread,
                             window_in=t.window_in, window_out=t.window_out)


def _meta(args, cfg: RunConfig | None, **extra) -> dict:
    meta = {"version": __version__, "subcommand": args.command, "seed": args.seed,
            "python": platform.python_version(), "numpy": np.__version__,
            "machine": platform.machine()}
    if cfg is not None:
        meta["config"] = cfg.to_dict()
    meta.update(extra)
    return meta


def _emit(args, payload: dict) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True, default=_jsonable) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def _jsonable(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def _figure_path(args, suffix=".png"):
    return Path(args.out).with_suffix(suffix) if args.out else None


def _status(checks: dict) -> int:
    for name, ok in checks.items():
        log.info("check %-40s %s", name, "pass" if ok else "FAIL")
    return 0 if all(checks.values()) else 1


def _row_name(r) -> str:
    return f"{r['label']}/{r['adjacency_kind']}" if "adjacency_kind" in r else r["label"]


def _loss_checks(rows) -> dict:
    return {f"loss decreased [{_row_name(r)}]": r["final_loss"] < r["first_loss"] for r in rows}


# ------------------------------------------------------------- subcommands


def cmd_verify(args, cfg):
    sweep = decomposition_sweep(args.cases, seed=args.seed or 0)
    grads = gradcheck_all(seed=args.seed or 0)
    checks = {"decomposition": sweep["max_abs_diff"] <= DECOMPOSITION_TOL}
    checks.update({f"gradcheck {g.layer}": g.passed for g in grads})
    _emit(args, {"meta": _meta(args, None),
                 "data": {"decomposition": sweep, "gradcheck": [g.to_dict() for g in grads],
                          "checks": checks}})
    return _status(checks)


def cmd_gradcheck(args, cfg):
    grads = gradcheck_all(seed=args.seed or 0, probes=args.probes, step=args.step, tol=args.tol)
    checks = {g.layer: g.passed for g in grads}
    _emit(args, {"meta": _meta(args, None),
                 "data": {"gradcheck": [g.to_dict() for g in grads], "checks": checks}})
    return _status(checks)


def cmd_bench(args, cfg):
    from .plotting import plot_scaling

    b = cfg.bench
    n_list = b.n_list
    if args.preset == "default":
        n_list = DEFAULT_PRESET
    elif args.preset == "scaling":
        n_list = SCALING_PRESET
    with_backward = b.with_backward or args.with_backward
    records, fits = [], []
    for kind in b.kinds:
        recs = bench_layer(kind, n_list, b.d_in, b.d_out, b.batch_size, b.batches,
                           b.repeats, b.warmups, seed=args.seed or 0, with_backward=with_backward)
        records.extend(recs)
        if len({r.n for r in recs if not r.failed}) >= 3:
            fits.append(fit_scaling_exponent(recs))
    meta = _meta(args, cfg, n_list=list(n_list), with_backward=with_backward)
    checks = {}
    if args.check:
        for f in fits:
            limit = SCALING_LIMITS.get(f.layer_kind)
            ok = f.slope >= limit if f.layer_kind == "GraphConv" else f.slope <= limit
            checks[f"slope {f.layer_kind}"] = ok and f.r_squared >= SCALING_LIMITS["r_squared"]
    if args.out:
        emit_report(records, fits, args.out, args.format, meta)
        plot_scaling(records, fits, _figure_path(args))
    else:
        print(json.dumps({"meta": meta, "records": [asdict(r) for r in records],
                          "fits": [asdict(f) for f in fits]}, indent=2, sort_keys=True))
    return _status(checks)


def cmd_train(args, cfg):
    from .plotting import plot_training

    ds = build_dataset(cfg)
    rep = train_forecaster(ds, cfg.train, checkpoint=args.checkpoint)
    data = rep.data()
    data["dataset"] = ds.to_dict()
    _emit(args, {"meta": _meta(args, cfg, wall_time=rep.wall_time), "data": data})
    if args.out:
        plot_training(data, _figure_path(args))
    return _status({"loss decreased": rep.train_loss[-1] < rep.train_loss[0]})


def _suite(args, cfg, runner, checks_fn):
    from .plotting import plot_suite

    ds = build_dataset(cfg)
    table = runner(ds, cfg.train)
    checks = {**_loss_checks(table["rows"]), **checks_fn(table["rows"])}
    table["checks"] = checks
    table["dataset"] = ds.to_dict()
    _emit(args, {"meta": _meta(args, cfg), "data": table})
    if args.out:
        plot_suite(table, _figure_path(args))
    return _status(checks)


def _swap_checks(rows):
    rel = {r["label"]: r["mae_rel_to_true"] for r in rows}
    checks = {f"{k} within 10% of True": abs(rel[k]) <= SWAP_REL_TOL
              for k in ("R", "M", "I+R", "I+M") if k in rel}
    return checks


def _identity_checks(rows):
    gc_true, gc_id, gfs = (r["test"]["mae"] for r in rows)
    return {"GraphConv MAE(I) >= MAE(True)": gc_id >= gc_true,
            "Gfs beats GraphConv with I": gfs < gc_id}


def _ablation_checks(rows):
    mae = {r["label"]: r["test"]["mae"] for r in rows}
    return {"Full <= NoRes": mae["Full"] <= mae["NoRes"]}


def cmd_nodeclass(args, cfg):
    from .plotting import plot_nodeclass

    nc = cfg.nodeclass
    if args.kind:
        nc = replace(nc, kind=args.kind)
    ds = synth_sbm_generate(nc.n, nc.classes, nc.p_in, nc.p_out, nc.feature_dim,
                            nc.separation, make_rng(nc.data_seed))
    rep = train_node_classifier(ds, nc.kind, nc, seed=args.seed or 0)
    wall = rep.pop("wall_time")
    _emit(args, {"meta": _meta(args, cfg, wall_time=wall), "data": rep})
    if args.out:
        plot_nodeclass(rep, _figure_path(args))
    checks = {"loss decreased": rep["train_loss"][-1] < rep["train_loss"][0]}
    if nc.kind == "GfsStack3":
        checks["train accuracy >= 0.95"] = rep["train_accuracy"] >= 0.95
        checks["test accuracy >= 0.90"] = rep["test_accuracy"] >= 0.90
    return _status(checks)


COMMANDS = {
    "verify": (cmd_verify, "check the layer-norm/graph-convolution identity and all gradients"),
    "gradcheck": (cmd_gradcheck, "finite-difference gradient checks for every layer"),
    "bench": (cmd_bench, "time single GFS and graph-convolution layers across vertex counts"),
    "train": (cmd_train, "train one forecaster"),
    "swap-adj": (lambda a, c: _suite(a, c, run_swap_suite, _swap_checks),
                 "graph convolution under true and artificial adjacency matrices"),
    "identity": (lambda a, c: _suite(a, c, run_identity_suite, _identity_checks),
                 "true vs identity adjacency, plus GFS"),
    "ablate": (lambda a, c: _suite(a, c, run_ablation_suite, _ablation_checks),
               "GFS and its five ablated variants"),
    "nodeclass": (cmd_nodeclass, "3-layer GFS or GCN stack on a synthetic block-model graph"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="graphfree", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", help="JSON or TOML config file")
        p.add_argument("--seed", type=int, default=None, help="run seed (non-negative)")
        p.add_argument("--out", help="output path; figures are written next to it")
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "verify":
            p.add_argument("--cases", type=int, default=1000)
        if name == "gradcheck":
            p.add_argument("--probes", type=int, default=100)
            p.add_argument("--step", type=float, default=1e-5)
            p.add_argument("--tol", type=float, default=1e-4)
        if name == "bench":
            p.add_argument("--preset", choices=("default", "scaling"))
            p.add_argument("--format", choices=("json", "csv"), default="json")
            p.add_argument("--with-backward", action="store_true")
            p.add_argument("--check", action="store_true",
                           help="fail unless slopes are GraphConv >= 1.7, Gfs <= 1.3, r^2 >= 0.98")
        if name == "train":
            p.add_argument("--checkpoint", help="save the selected parameters here")
        if name == "nodeclass":
            p.add_argument("--kind", choices=("GfsStack3", "GcnStack3"))
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    if not argv:
        parser.print_usage(sys.stderr)
        return 2
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.seed is not None and args.seed < 0:
        print("error: --seed must be non-negative", file=sys.stderr)
        return 2
    try:
        cfg = load_config(args.config, seed=args.seed)
    except FileNotFoundError as exc:
        print(f"error: config file not found: {exc.filename}", file=sys.stderr)
        return 2
    except (OSError, ValueError, TypeError) as exc:
        print(f"error: invalid config: {exc}", file=sys.stderr)
        return 2
    handler = COMMANDS[args.command][0]
    try:
        return handler(args, cfg)
    except GraphFreeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
