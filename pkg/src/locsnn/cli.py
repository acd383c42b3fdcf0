"""Command-line front end.

Subcommands: train, eval, stream, count-ops, graph, gen-synth. Training is
configured by a flat ``key = value`` file plus repeatable ``--set key=value``
overrides; the fully resolved configuration is echoed before any work
starts. Exit codes: 0 on success, 2 for configuration problems, 3 for data
problems.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .energy import count_dense_ops, count_snn_ops, energy_ratio
from .errors import ConfigError, DataError
from .events import (
    DatasetMeta,
    LateBurstSpec,
    SynthSpec,
    _fit_length,
    _parse_kv,
    gen_late_burst,
    gen_synthetic,
    load_dataset,
    read_event_file,
    write_dataset,
)
from .models import HybridLifGnn, HybridSrmFc, load_model, save_model
from .neurons import SrmParams, SurrogateSpec
from .streaming import stream
from .topology import build_spatial_graph, build_temporal_graph, default_taxel_coords, make_order
from .training import TrainConfig, run_protocol, write_metrics_csv
from .validation import as_batch

_COMMON_SCHEMA = {
    "model": str,
    "epochs": int,
    "batch_size": int,
    "lr": float,
    "seed": int,
    "rounds": int,
    "train_frac": float,
    "n_classes": int,
    "order": str,
    "surrogate": str,
    "surrogate_scale": float,
}

_SRM_SCHEMA = {
    **_COMMON_SCHEMA,
    "hidden": int,
    "threshold": float,
    "tau_s": float,
    "tau_r": float,
    "kernel_window": int,
    "l2": float,
    "lam": float,
    "target_true": float,
    "target_false": float,
}

_GNN_SCHEMA = {
    **_COMMON_SCHEMA,
    "filters": int,
    "fc_widths": str,
    "hops": int,
    "alpha": float,
    "beta": float,
    "threshold": float,
    "temporal_mode": str,
    "fusion": str,
    "lr_decay": float,
}

_SRM_DEFAULTS = {
    "model": "hybrid_srm_fc", "epochs": 30, "batch_size": 16, "lr": 0.005,
    "seed": 0, "rounds": 1, "train_frac": 0.8, "n_classes": None, "order": "identity",
    "surrogate": "exponential", "surrogate_scale": 2.0, "hidden": 32,
    "threshold": 1.0, "tau_s": 2.0, "tau_r": 2.0, "kernel_window": None,
    "l2": 0.0, "lam": 1.0, "target_true": None, "target_false": None,
}

_GNN_DEFAULTS = {
    "model": "hybrid_lif_gnn", "epochs": 30, "batch_size": 16, "lr": 0.002,
    "seed": 0, "rounds": 1, "train_frac": 0.8, "n_classes": None, "order": "identity",
    "surrogate": "rectangular", "surrogate_scale": 1.0, "filters": 16,
    "fc_widths": (64,), "hops": 2, "alpha": 0.8, "beta": 0.8, "threshold": 0.5,
    "temporal_mode": "sparse", "fusion": "mean", "lr_decay": 1.0,
}

_MODEL_KINDS = {
    "hybrid_srm_fc": (_SRM_SCHEMA, _SRM_DEFAULTS),
    "hybrid_lif_gnn": (_GNN_SCHEMA, _GNN_DEFAULTS),
}


def _coerce(key, raw, kind):
    raw = raw.strip()
    if raw.lower() in ("none", ""):
        return None
    if key == "fc_widths":
        try:
            return tuple(int(p) for p in raw.replace(",", " ").split())
        except ValueError:
            raise ConfigError(f"fc_widths must be a comma-separated integer list, got {raw!r}")
    try:
        return kind(raw)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r} (expected {kind.__name__})")


def resolve_config(config_path, overrides) -> dict:
    """defaults <- config file <- --set overrides, validated against the
    schema of the selected model kind."""
    raw = {}
    if config_path:
        path = Path(config_path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            raw.update(_parse_kv(path))
        except DataError as exc:
            raise ConfigError(str(exc))
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, val = item.split("=", 1)
        raw[key.strip()] = val.strip()

    kind = raw.get("model", "hybrid_srm_fc")
    if kind not in _MODEL_KINDS:
        raise ConfigError(
            f"unknown model {kind!r}; choose from {', '.join(sorted(_MODEL_KINDS))}"
        )
    schema, defaults = _MODEL_KINDS[kind]
    cfg = dict(defaults)
    for key, val in raw.items():
        if key == "model":
            cfg["model"] = kind
            continue
        if key not in schema:
            raise ConfigError(
                f"unknown configuration key {key!r} for model {kind}; "
                f"known keys: {', '.join(sorted(schema))}"
            )
        cfg[key] = _coerce(key, val, schema[key])
    return cfg


def _fmt_value(val):
    if val is None:
        return "none"
    if isinstance(val, tuple):
        return ",".join(str(v) for v in val)
    if isinstance(val, float):
        return f"{val:g}"
    return str(val)


def _echo_config(cfg):
    print("# resolved configuration")
    for key in sorted(cfg):
        print(f"{key} = {_fmt_value(cfg[key])}")


def _build_model(cfg, n_taxels, n_steps, n_classes, seed):
    try:
        order = make_order(cfg["order"], n_taxels)
        if cfg["model"] == "hybrid_srm_fc":
            return HybridSrmFc(
                n_taxels, n_steps, n_classes, hidden=cfg["hidden"],
                srm=SrmParams(cfg["threshold"], cfg["tau_s"], cfg["tau_r"],
                              cfg["kernel_window"]),
                surrogate=SurrogateSpec(cfg["surrogate"], cfg["surrogate_scale"]),
                order=order, seed=seed,
            )
        return HybridLifGnn(
            n_taxels, n_steps, n_classes, filters=cfg["filters"],
            fc_widths=cfg["fc_widths"], hops=cfg["hops"], alpha=cfg["alpha"],
            beta=cfg["beta"], threshold=cfg["threshold"],
            temporal_mode=cfg["temporal_mode"], fusion=cfg["fusion"],
            surrogate=SurrogateSpec(cfg["surrogate"], cfg["surrogate_scale"]),
            order=order, seed=seed,
        )
    except ValueError as exc:
        raise ConfigError(str(exc))


def _train_config(cfg) -> TrainConfig:
    return TrainConfig(
        epochs=cfg["epochs"], batch_size=cfg["batch_size"], lr=cfg["lr"],
        l2=cfg.get("l2", 0.0), lam=cfg.get("lam", 1.0),
        lr_decay=cfg.get("lr_decay", 1.0),
        target_true=cfg.get("target_true"), target_false=cfg.get("target_false"),
        seed=cfg["seed"],
    )


def _load_xy(data_dir):
    streams, meta = load_dataset(data_dir)
    X = as_batch(streams)
    y = np.array([s.label for s in streams], dtype=np.int64)
    return X, y, meta


def cmd_train(args) -> int:
    cfg = resolve_config(args.config, args.set)
    X, y, meta = _load_xy(args.data)
    if cfg["n_classes"] is not None and cfg["n_classes"] != meta.n_classes:
        raise ConfigError(
            f"configuration declares {cfg['n_classes']} classes, dataset "
            f"manifest says {meta.n_classes}"
        )
    _echo_config(cfg)
    # fail on an incompatible order/shape before creating any artifacts
    _build_model(cfg, meta.n_taxels, meta.n_steps, meta.n_classes, cfg["seed"])
    tc = _train_config(cfg)

    def log(row):
        print(
            f"round {row.round} epoch {row.epoch}: train_loss {row.train_loss:.4f} "
            f"train_acc {row.train_acc:.4f} test_acc {row.test_acc:.4f}"
        )

    try:
        result = run_protocol(
            lambda seed: _build_model(cfg, meta.n_taxels, meta.n_steps, meta.n_classes, seed),
            X, y, tc, rounds=cfg["rounds"], train_frac=cfg["train_frac"], log=log,
        )
    except ValueError as exc:
        raise DataError(str(exc))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_metrics_csv(out / "metrics.csv", result.history)
    save_model(out / "model.npz", result.last_model)
    print(f"mean test accuracy over {cfg['rounds']} round(s): {result.mean_accuracy:.4f}")
    print(f"wrote {out / 'metrics.csv'} and {out / 'model.npz'}")
    return 0


def _load_checkpoint(path):
    path = Path(path)
    if not path.is_file():
        raise DataError(f"checkpoint not found: {path}")
    try:
        return load_model(path)
    except (ValueError, OSError, KeyError) as exc:
        raise DataError(f"cannot load checkpoint {path}: {exc}")


def _check_compat(model, meta: DatasetMeta):
    if model.n_taxels != meta.n_taxels or model.n_steps != meta.n_steps:
        raise DataError(
            f"model expects {model.n_taxels}x{model.n_steps} grids, dataset "
            f"provides {meta.n_taxels}x{meta.n_steps}"
        )
    if model.n_classes != meta.n_classes:
        raise DataError(
            f"model has {model.n_classes} classes, dataset manifest says {meta.n_classes}"
        )


def cmd_eval(args) -> int:
    model = _load_checkpoint(args.model)
    X, y, meta = _load_xy(args.data)
    _check_compat(model, meta)
    threads = args.threads or os.cpu_count() or 1
    chunks = [
        X[lo:lo + args.batch_size].astype(np.float64)
        for lo in range(0, len(X), args.batch_size)
    ]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        preds = np.concatenate(list(pool.map(model.predict, chunks)))
    correct = int((preds == y).sum())
    print(f"accuracy = {correct / len(y):.4f} ({correct}/{len(y)})")
    return 0


def _stream_rows(model, steps):
    n_classes = model.n_classes
    if isinstance(model, HybridSrmFc):
        header = ["t", "prediction"]
        header += [f"time{k}" for k in range(n_classes)]
        header += [f"loc{k}" for k in range(n_classes)]
        rows = [
            [step.t, step.prediction, *step.counts_time.tolist(), *step.counts_loc.tolist()]
            for step in steps
        ]
    else:
        header = ["t", "prediction"]
        header += [f"fused{k}" for k in range(n_classes)]
        header += [f"time{k}" for k in range(n_classes)]
        header += [f"loc{k}" for k in range(n_classes)]
        rows = [
            [step.t, step.prediction, *step.fused.tolist(),
             *step.label_time.tolist(), *step.label_loc.tolist()]
            for step in steps
        ]
    return header, rows


def cmd_stream(args) -> int:
    model = _load_checkpoint(args.model)
    grid, _bin_width, label = read_event_file(args.input)
    if grid.shape[0] != model.n_taxels:
        raise DataError(
            f"{args.input}: {grid.shape[0]} taxels, model expects {model.n_taxels}"
        )
    grid = _fit_length(grid, model.n_steps)
    steps = stream(model, grid, weighting=args.weighting,
                   sharpness=args.sharpness, zeta=args.zeta)
    header, rows = _stream_rows(model, steps)
    lines = [",".join(header)]
    lines += [",".join(f"{v:.10g}" if isinstance(v, float) else str(v) for v in row)
              for row in rows]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    print(f"final prediction: {steps[-1].prediction} (label in file: {label})")
    return 0


def cmd_count_ops(args) -> int:
    model = _load_checkpoint(args.model)
    if not args.input and not args.data:
        raise ConfigError("count-ops needs --data or --input")
    if args.input:
        grid, _bw, _label = read_event_file(args.input)
        if grid.shape[0] != model.n_taxels:
            raise DataError(
                f"{args.input}: {grid.shape[0]} taxels, model expects {model.n_taxels}"
            )
        X = _fit_length(grid, model.n_steps)[None].astype(np.float64)
    else:
        X, _y, meta = _load_xy(args.data)
        _check_compat(model, meta)
        if args.limit:
            X = X[:args.limit]
        X = X.astype(np.float64)
    snn = count_snn_ops(model, X, mode=args.mode)
    dense = count_dense_ops(model, n_samples=len(X))
    lines = ["layer,kind,synaptic_adds,state_adds,adds,mults"]
    for row in snn.layers:
        lines.append(
            f"{row.name},{row.kind},{row.synaptic_adds},{row.state_adds},"
            f"{row.adds},{row.mults}"
        )
    lines.append(f"total,snn,{sum(r.synaptic_adds for r in snn.layers)},"
                 f"{sum(r.state_adds for r in snn.layers)},{snn.adds},{snn.mults}")
    lines.append(f"total,dense,0,0,{dense.adds},{dense.mults}")
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    print(f"spiking: {snn.adds} adds, {snn.mults} mults over {len(X)} sample(s) [{args.mode}]")
    print(f"dense twin: {dense.adds} adds, {dense.mults} mults")
    print(f"energy ratio (dense/spiking): {energy_ratio(snn, dense):.2f}x")
    return 0


def _read_coords_file(path):
    path = Path(path)
    if not path.is_file():
        raise DataError(f"coordinates file not found: {path}")
    try:
        table = np.loadtxt(path, comments="#", ndmin=2)
    except ValueError as exc:
        raise DataError(f"{path}: cannot parse coordinates ({exc})")
    if table.shape[1] == 3:  # leading taxel index column
        table = table[np.argsort(table[:, 0])][:, 1:]
    if table.shape[1] != 2:
        raise DataError(f"{path}: expected 'x y' or 'index x y' rows")
    return table


def cmd_graph(args) -> int:
    if args.kind == "spatial":
        coords = _read_coords_file(args.coords) if args.coords \
            else default_taxel_coords(args.taxels)
        try:
            graph = build_spatial_graph(coords)
        except ValueError as exc:
            raise ConfigError(str(exc))
        lines = ["u,v,weight"]
        for i, j in graph.edges:
            w = float(np.hypot(*(coords[i] - coords[j])))
            lines.append(f"{i},{j},{w:.10g}")
    else:
        try:
            graph = build_temporal_graph(args.steps, args.mode)
        except ValueError as exc:
            raise ConfigError(str(exc))
        lines = ["u,v,weight"]
        lines += [f"{p},{q},1" for p, q in graph.edges]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {args.out} ({len(lines) - 1} edges)")
    else:
        sys.stdout.write(text)
    return 0


def cmd_gen_synth(args) -> int:
    try:
        if args.task == "rate":
            spec = SynthSpec(
                n_taxels=args.taxels, n_steps=args.steps, n_classes=args.classes,
                samples_per_class=args.per_class, rate_hi=args.rate_hi,
                rate_lo=args.rate_lo, seed=args.seed,
            )
            streams = gen_synthetic(spec)
        else:
            late_start = args.late_start if args.late_start is not None \
                else args.steps // 2
            spec = LateBurstSpec(
                n_taxels=args.taxels, n_steps=args.steps, n_classes=args.classes,
                samples_per_class=args.per_class, late_start=late_start,
                seed=args.seed,
            )
            streams = gen_late_burst(spec)
    except ValueError as exc:
        raise ConfigError(str(exc))
    meta = DatasetMeta(
        name=f"synth-{args.task}", n_taxels=args.taxels, n_steps=args.steps,
        n_classes=args.classes, bin_width=args.bin_width,
    )
    write_dataset(args.out, streams, meta)
    print(f"wrote {len(streams)} samples to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="locsnn",
        description="Event-driven spiking networks over time and location recurrences.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a hybrid on an event dataset")
    p.add_argument("--data", required=True, help="dataset directory (manifest + class dirs)")
    p.add_argument("--out", required=True, help="output directory for metrics.csv and model.npz")
    p.add_argument("--config", help="flat key = value configuration file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a configuration key (repeatable)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint on a dataset")
    p.add_argument("--model", required=True, help="checkpoint .npz")
    p.add_argument("--data", required=True)
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (default: cpu count)")
    p.add_argument("--batch-size", type=int, default=64)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("stream", help="classify one event file bin by bin")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True, help="event file")
    p.add_argument("--weighting", choices=["none", "sigmoid", "linear"], default="none")
    p.add_argument("--sharpness", type=float, default=6.0)
    p.add_argument("--zeta", type=float, default=2.0)
    p.add_argument("--out", help="per-step CSV (default: stdout)")
    p.set_defaults(func=cmd_stream)

    p = sub.add_parser("count-ops", help="event-driven operation counts vs the dense twin")
    p.add_argument("--model", required=True)
    p.add_argument("--data", help="dataset directory")
    p.add_argument("--input", help="single event file instead of --data")
    p.add_argument("--limit", type=int, help="cap the number of dataset samples")
    p.add_argument("--mode", choices=["gated", "strict"], default="gated")
    p.add_argument("--out", help="per-layer CSV (default: stdout)")
    p.set_defaults(func=cmd_count_ops)

    p = sub.add_parser("graph", help="emit a connectivity graph as edge rows")
    p.add_argument("--kind", choices=["spatial", "temporal"], required=True)
    p.add_argument("--taxels", type=int, default=39)
    p.add_argument("--coords", help="text file of 'x y' or 'index x y' rows")
    p.add_argument("--steps", type=int, default=10)
    p.add_argument("--mode", choices=["sparse", "dense"], default="sparse")
    p.add_argument("--out")
    p.set_defaults(func=cmd_graph)

    p = sub.add_parser("gen-synth", help="write a seeded synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--task", choices=["rate", "late-burst"], default="rate")
    p.add_argument("--taxels", type=int, default=16)
    p.add_argument("--steps", type=int, default=40)
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--per-class", type=int, default=60)
    p.add_argument("--rate-hi", type=float, default=0.5)
    p.add_argument("--rate-lo", type=float, default=0.05)
    p.add_argument("--late-start", type=int, default=None)
    p.add_argument("--bin-width", type=float, default=0.02)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
