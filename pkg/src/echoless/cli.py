"""Command-line entry point: ``echoless <subcommand> ...``.

Exit codes: 0 ok, 2 config, 3 memory guard, 4 numeric, 5 I/O.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import re
import sys
from contextlib import contextmanager
from dataclasses import asdict, dataclass, fields

from . import bench as benchmod
from .data import (
    LabelMatrix,
    SyntheticSpec,
    gen_synthetic,
    load_labels,
    load_splits,
    write_labels,
    write_splits,
)
from .encoder import EncoderConfig, evaluate, train_encoder
from .errors import ConfigError, EcholessError, FormatError, MemoryGuardError, format_bytes
from .graph import NORM_MODES, ROW_STOCHASTIC, load_graph, write_graph
from .labelprop import APS, DEFAULT_M, DEFAULT_MEM_CAP, ECHOLESS, SCHEMES, STRATEGIES, precompute
from .propagation import HOP_AVERAGED, KINDS, METAPATH, MessagePassingPlan, estimate_dense_bytes, hop_plans
from .tensor_io import read_elpt, write_elpt
from .verify import LeakageConfig, measure_leakage

log = logging.getLogger("echoless")

EXIT_OK, EXIT_CONFIG, EXIT_MEMORY, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4, 5

_UNITS = {"": 1, "B": 1, "KB": 10**3, "MB": 10**6, "GB": 10**9, "TB": 10**12,
          "KIB": 2**10, "MIB": 2**20, "GIB": 2**30, "TIB": 2**40}


def parse_bytes(text) -> int:
    """'128GB' -> 128e9. Decimal units unless written as KiB/MiB/GiB/TiB."""
    if isinstance(text, int):
        return text
    m = re.fullmatch(r"\s*([0-9]*\.?[0-9]+)\s*([A-Za-z]*)\s*", str(text))
    if not m or m.group(2).upper() not in _UNITS:
        raise ConfigError(f"cannot parse byte size {text!r}")
    return int(float(m.group(1)) * _UNITS[m.group(2).upper()])


@dataclass
class RunConfig:
    """Inputs and knobs of ``precompute``. Loaded from JSON, then overridden by flags."""

    nodes: str | None = None
    edges: str | None = None
    target: str | None = None
    labels: str | None = None
    splits: str | None = None
    strategy: str = ECHOLESS
    hops: int = 3
    partitions: int = DEFAULT_M
    scheme: str = APS
    post_adjust: bool = True
    seed: int = 0
    mem_cap: int = DEFAULT_MEM_CAP
    out: str | None = None
    kind: str = HOP_AVERAGED
    norm: str = ROW_STOCHASTIC
    k_min: int | None = None
    metapaths: list | None = None
    dtype: str = "f8"

    def validate(self):
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"strategy must be one of {STRATEGIES}")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme must be one of {SCHEMES}")
        if self.hops < 1 or self.partitions < 1 or self.mem_cap <= 0:
            raise ConfigError("hops and partitions must be >= 1 and mem_cap > 0")
        for name in ("nodes", "edges", "target", "labels", "splits", "out"):
            if getattr(self, name) is None:
                raise ConfigError(f"missing required setting {name!r}")

    def plans(self) -> list[MessagePassingPlan]:
        if self.kind == METAPATH or self.metapaths:
            if not self.metapaths:
                raise ConfigError("metapath kind needs at least one --metapath")
            kind = METAPATH if self.kind == METAPATH else self.kind
            return [MessagePassingPlan(kind, len(mp), tuple(mp), self.norm) for mp in self.metapaths]
        return hop_plans(self.hops, self.kind, self.norm)


def _config_from(args) -> RunConfig:
    data = {}
    if getattr(args, "config", None):
        try:
            with open(args.config, encoding="utf-8") as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        unknown = set(data) - {f.name for f in fields(RunConfig)}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if getattr(args, "data", None):
        data.update(_data_dir_paths(args.data))
    for f in fields(RunConfig):
        val = getattr(args, f.name, None)
        if val is not None:
            data[f.name] = val
    cfg = RunConfig(**data)
    cfg.mem_cap = parse_bytes(cfg.mem_cap)
    if isinstance(cfg.post_adjust, str):
        cfg.post_adjust = cfg.post_adjust == "on"
    if cfg.metapaths:
        cfg.metapaths = [mp.split(",") if isinstance(mp, str) else list(mp) for mp in cfg.metapaths]
    return cfg


def _data_dir_paths(d):
    paths = {k: os.path.join(d, f"{k}.tsv") for k in ("nodes", "edges", "labels", "splits")}
    meta = os.path.join(d, "meta.json")
    if os.path.exists(meta):
        with open(meta, encoding="utf-8") as fh:
            paths["target"] = json.load(fh)["target_type"]
    return paths


def _load_inputs(cfg):
    for name in ("nodes", "edges", "labels", "splits"):
        path = getattr(cfg, name)
        if not os.path.exists(path):
            raise ConfigError(f"{name} file not found: {path}")
    graph = load_graph(cfg.nodes, cfg.edges, cfg.target)
    labels = load_labels(cfg.labels, graph.num_targets)
    split = load_splits(cfg.splits, graph.num_targets)
    C = int(labels.max()) + 1 if (labels >= 0).any() else 0
    Y = LabelMatrix.from_labels(labels, split, C).Y
    return graph, labels, split, Y


@contextmanager
def out_dir_lock(path):
    """One run per output directory."""
    os.makedirs(path, exist_ok=True)
    lock = os.path.join(path, ".lock")
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise ConfigError(f"output directory {path} is locked by another run ({lock})") from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        os.unlink(lock)


def _dump_json(obj, path):
    if path is None or path == "-":
        json.dump(obj, sys.stdout, indent=2, sort_keys=True)
        sys.stdout.write("\n")
        return
    try:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(obj, fh, indent=2, sort_keys=True)
    except OSError as exc:
        raise FormatError(f"cannot write {path}: {exc}") from exc


# --------------------------------------------------------------------------- subcommands


def cmd_gen_synthetic(args):
    spec = SyntheticSpec()
    if args.spec:
        with open(args.spec, encoding="utf-8") as fh:
            raw = json.load(fh)
        raw["relations"] = [tuple(r) for r in raw.get("relations", spec.relations)]
        spec = SyntheticSpec(**raw)
    if args.targets is not None:
        spec.node_types[spec.target_type] = args.targets
    if args.classes is not None:
        spec.num_classes = args.classes
    if args.train_frac is not None:
        spec.train_frac = args.train_frac
    graph, labels, split = gen_synthetic(spec, args.seed)
    os.makedirs(args.out, exist_ok=True)
    write_graph(graph, os.path.join(args.out, "nodes.tsv"), os.path.join(args.out, "edges.tsv"))
    write_labels(os.path.join(args.out, "labels.tsv"), labels)
    write_splits(os.path.join(args.out, "splits.tsv"), split)
    _dump_json({"target_type": spec.target_type, "seed": args.seed, "spec": asdict(spec)},
               os.path.join(args.out, "meta.json"))
    print(f"wrote N={graph.num_targets} E={graph.num_edges} to {args.out}")
    return EXIT_OK


def cmd_precompute(args):
    cfg = _config_from(args)
    cfg.validate()
    plans = cfg.plans()
    graph, _, split, Y = _load_inputs(cfg)
    meta = {"config": asdict(cfg), "N": graph.num_targets, "E": graph.num_edges,
            "operator_note": "message-passing kinds are desk-scale stand-ins for backbone operators"}
    with out_dir_lock(cfg.out):
        try:
            tensors = precompute(
                cfg.strategy, plans, graph, Y, split, M=cfg.partitions, seed=cfg.seed,
                scheme=cfg.scheme, post_adjust_on=cfg.post_adjust, mem_cap=cfg.mem_cap, k_min=cfg.k_min,
            )
        except MemoryGuardError as exc:
            meta.update(status=benchmod.OOM_GUARD, estimate_bytes=exc.estimate_bytes, error=str(exc))
            _dump_json(meta, os.path.join(cfg.out, "metadata.json"))
            raise
        files = []
        first_hop = len(plans) - len(tensors) + 1
        for k, t in enumerate(tensors, start=first_hop):
            path = os.path.join(cfg.out, f"hop_{k}.elpt")
            write_elpt(path, t, cfg.dtype, {"seed": cfg.seed, "hop": k})
            files.append(os.path.basename(path))
        meta.update(status=benchmod.OK, files=files)
        _dump_json(meta, os.path.join(cfg.out, "metadata.json"))
    print(f"{cfg.strategy}: wrote {len(files)} tensors to {cfg.out}")
    return EXIT_OK


def cmd_verify_leakage(args):
    cfg = _config_from(args)
    for name in ("nodes", "edges", "target", "labels", "splits"):
        if getattr(cfg, name) is None:
            raise ConfigError(f"missing required setting {name!r}")
    graph, _, split, Y = _load_inputs(cfg)
    plan = cfg.plans()[-1]
    lcfg = LeakageConfig(M=cfg.partitions, seed=cfg.seed, scheme=cfg.scheme,
                         post_adjust_on=cfg.post_adjust, mem_cap=cfg.mem_cap,
                         metric=args.metric, tol=args.tol)
    report = measure_leakage(cfg.strategy, plan, graph, Y, split, lcfg)
    _dump_json(report.to_json(per_node=args.per_node), args.report)
    return EXIT_OK


def cmd_estimate_memory(args):
    est = estimate_dense_bytes(args.num_nodes, args.dtype_bytes)
    out = {"N": args.num_nodes, "dtype_bytes": args.dtype_bytes, "bytes": est.nbytes,
           "human": format_bytes(est.nbytes), "overflow": est.overflow}
    if args.mem_cap is not None:
        out["mem_cap"] = parse_bytes(args.mem_cap)
        out["exceeds_cap"] = est.overflow or est.nbytes > out["mem_cap"]
    _dump_json(out, args.report)
    return EXIT_MEMORY if out.get("exceeds_cap") else EXIT_OK


def cmd_train_eval(args):
    tensors = [read_elpt(p) for p in args.tensors]
    n = tensors[0].shape[0]
    labels = load_labels(args.labels, n)
    split = load_splits(args.splits, n)
    cfg = EncoderConfig(lr=args.lr, epochs=args.epochs, dropout_in=args.dropout_in,
                        dropout_label=args.dropout_label, seed=args.seed, patience=args.patience)
    model, metrics = train_encoder(tensors, labels, split, cfg)
    for part in ("train", "valid", "test"):
        if split.indices(part).size:
            acc, f1 = evaluate(model, tensors, labels, split, part)
            metrics[f"{part}_acc"], metrics[f"{part}_macro_f1"] = acc, f1
    metrics["encoder"] = "linear softmax stand-in"
    _dump_json(metrics, args.metrics_out)
    return EXIT_OK


def cmd_bench(args):
    cfg = _config_from(args)
    for name in ("nodes", "edges", "target", "labels", "splits"):
        if getattr(cfg, name) is None:
            raise ConfigError(f"missing required setting {name!r}")
    graph, _, split, Y = _load_inputs(cfg)
    records = benchmod.bench_sweep(
        graph, Y, split, args.strategies, args.hops_list, args.partitions_list, cfg.mem_cap,
        kind=cfg.kind, scheme=cfg.scheme, repeats=args.repeats, seed=cfg.seed,
        trace_memory=args.trace_memory,
    )
    benchmod.write_csv(args.csv, records)
    print(f"wrote {len(records)} records to {args.csv}")
    return EXIT_OK


def cmd_plot_data(args):
    _dump_json(benchmod.plot_data(benchmod.read_csv(args.bench)), args.report)
    return EXIT_OK


# --------------------------------------------------------------------------- parser


def _graph_args(p):
    p.add_argument("--config", help="JSON file with RunConfig keys; flags override it")
    p.add_argument("--data", help="directory written by gen-synthetic")
    p.add_argument("--nodes")
    p.add_argument("--edges")
    p.add_argument("--target")
    p.add_argument("--labels")
    p.add_argument("--splits")
    p.add_argument("--strategy", choices=STRATEGIES)
    p.add_argument("--hops", type=int)
    p.add_argument("--partitions", type=int)
    p.add_argument("--scheme", choices=SCHEMES)
    p.add_argument("--post-adjust", dest="post_adjust", choices=("on", "off"))
    p.add_argument("--seed", type=int)
    p.add_argument("--mem-cap", dest="mem_cap")
    p.add_argument("--kind", choices=KINDS)
    p.add_argument("--norm", choices=NORM_MODES)
    p.add_argument("--metapath", dest="metapaths", action="append",
                   help="comma-separated relation names; repeat for several plans")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="echoless", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synthetic", help="write a random-label heterogeneous fixture")
    p.add_argument("--out", required=True)
    p.add_argument("--spec", help="JSON with SyntheticSpec fields")
    p.add_argument("--targets", type=int)
    p.add_argument("--classes", type=int)
    p.add_argument("--train-frac", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen_synthetic)

    p = sub.add_parser("precompute", help="label pre-computation, one ELPT file per hop")
    _graph_args(p)
    p.add_argument("--out")
    p.add_argument("--k-min", dest="k_min", type=int)
    p.add_argument("--dtype", choices=("f4", "f8"))
    p.set_defaults(func=cmd_precompute)

    p = sub.add_parser("verify-leakage", help="per-node echo measurement (desk scale)")
    _graph_args(p)
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--metric", choices=("max", "l2"), default="max")
    p.add_argument("--per-node", action="store_true")
    p.add_argument("--report", default="-")
    p.set_defaults(func=cmd_verify_leakage)

    p = sub.add_parser("estimate-memory", help="bytes for a dense N x N propagation matrix")
    p.add_argument("--num-nodes", type=int, required=True)
    p.add_argument("--dtype-bytes", type=int, default=8)
    p.add_argument("--mem-cap")
    p.add_argument("--report", default="-")
    p.set_defaults(func=cmd_estimate_memory)

    p = sub.add_parser("train-eval", help="train the linear encoder on ELPT tensors")
    p.add_argument("--tensors", nargs="+", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--splits", required=True)
    p.add_argument("--lr", type=float, default=0.5)
    p.add_argument("--epochs", type=int, default=300)
    p.add_argument("--dropout-in", type=float, default=0.0)
    p.add_argument("--dropout-label", type=float, default=0.0)
    p.add_argument("--patience", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--metrics-out", default="-")
    p.set_defaults(func=cmd_train_eval)

    p = sub.add_parser("bench", help="time/memory sweep over strategies, K and M")
    _graph_args(p)
    p.add_argument("--strategies", nargs="*", default=[ECHOLESS], choices=STRATEGIES)
    p.add_argument("--hops-list", nargs="*", type=int, default=[1, 2, 3])
    p.add_argument("--partitions-list", nargs="*", type=int, default=[DEFAULT_M])
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--trace-memory", action="store_true")
    p.add_argument("--csv", required=True)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("plot-data", help="turn a bench CSV into plot series JSON")
    p.add_argument("--bench", required=True)
    p.add_argument("--report", default="-")
    p.set_defaults(func=cmd_plot_data)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except EcholessError as exc:
        print(f"error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error (I/O): {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
