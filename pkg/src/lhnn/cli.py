"""Command-line front end: gen, build, featurize, train, predict, eval, ablate.

Every run appends one JSON manifest line (command, config snapshot, input
hashes, outputs, seed, duration) to the manifest log. Exit codes:
0 success, 3 missing file, 4 parse failure, 5 config inconsistency,
6 training divergence, 1 other error.
"""
from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import sys
import time
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import __version__, baseline, evaluation, features, model
from .lhgraph import build_lhgraph, gnet_from_net
from .netlist import ParseError, parse_circuit, serialize_circuit, validate
from .model import ConfigError, LHNNConfig, TrainingDivergedError

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_MISSING_FILE = 3
EXIT_PARSE = 4
EXIT_CONFIG = 5
EXIT_DIVERGED = 6


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(args, command: str, inputs: Sequence[str], outputs: Sequence[str],
                    seed: Optional[int], config: Optional[LHNNConfig], t0: float) -> None:
    record = {
        "command": command,
        "argv": sys.argv[1:],
        "version": __version__,
        "seed": seed,
        "config": dataclasses.asdict(config) if config else None,
        "inputs": {p: _sha256(p) for p in inputs},
        "outputs": list(outputs),
        "duration_s": round(time.time() - t0, 3),
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    with open(args.manifest, "a") as fh:
        fh.write(json.dumps(record, sort_keys=True) + "\n")


def _load_circuit(path: str):
    with open(path) as fh:
        circuit = parse_circuit(fh.read())
    report = validate(circuit)
    if report:
        raise ParseError(f"{path}: invalid circuit: " + "; ".join(report))
    return circuit


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("config overrides (mirror config keys)")
    for f in dataclasses.fields(LHNNConfig):
        flag = "--" + f.name.replace("_", "-")
        if isinstance(f.default, bool):
            group.add_argument(flag, action=argparse.BooleanOptionalAction, default=None)
        elif isinstance(f.default, int):
            group.add_argument(flag, type=int, default=None)
        elif isinstance(f.default, float):
            group.add_argument(flag, type=float, default=None)
        else:
            group.add_argument(flag, type=str, default=None)


def _resolve_config(args) -> LHNNConfig:
    config = model.load_config(args.config) if getattr(args, "config", None) else LHNNConfig()
    for f in dataclasses.fields(LHNNConfig):
        override = getattr(args, f.name, None)
        if override is not None:
            setattr(config, f.name, override)
    config.validate()
    return config


def _prepare_dataset(circuit_paths, label_paths, config, norm=None):
    if len(circuit_paths) != len(label_paths):
        raise ConfigError("need one --labels per --circuit")
    graphs, labels = [], []
    for cpath, lpath in zip(circuit_paths, label_paths):
        circuit = _load_circuit(cpath)
        graph = build_lhgraph(circuit, config.gnet_filter_fraction)
        maps, nx, ny = evaluation.load_labels(lpath)
        if (nx, ny) != (circuit.grid.nx, circuit.grid.ny):
            raise ConfigError(f"{lpath}: label grid {nx}x{ny} does not match circuit")
        graphs.append(graph)
        labels.append(maps)
    if norm is None:
        norm = model.compute_norm_stats(graphs)
    data = [
        model.prepare_circuit(path, graph, maps, config, norm)
        for path, graph, maps in zip(circuit_paths, graphs, labels)
    ]
    return data, norm


def _write_metrics_csv(path: str, metrics: List[Dict[str, float]]) -> None:
    if not metrics:
        return
    keys = list(metrics[0])
    with open(path, "w") as fh:
        fh.write(",".join(keys) + "\n")
        for row in metrics:
            fh.write(",".join(f"{row[k]:.9g}" for k in keys) + "\n")


# ---------------------------------------------------------------------------
# Commands


def cmd_gen(args) -> int:
    t0 = time.time()
    spec = evaluation.SynthSpec(
        nx=args.nx, ny=args.ny, n_cells=args.n_cells, n_nets=args.n_nets,
        pin_lo=args.pin_lo, pin_hi=args.pin_hi,
        terminal_fraction=args.terminal_fraction,
        net_locality=args.net_locality, seed=args.seed,
    )
    circuit, maps = evaluation.synth_instance(spec, target_rate=args.target_rate)
    with open(args.out_circuit, "w") as fh:
        fh.write(serialize_circuit(circuit))
    outputs = [args.out_circuit]
    if args.out_labels:
        evaluation.write_labels(args.out_labels, maps, circuit.grid)
        outputs.append(args.out_labels)
    rate_h = float(np.mean(maps.cong_h))
    print(f"generated {args.out_circuit}: {len(circuit.cells)} cells, "
          f"{len(circuit.nets)} nets, congestion rate h={rate_h:.4f}")
    _write_manifest(args, "gen", [], outputs, args.seed, None, t0)
    return EXIT_OK


def cmd_build(args) -> int:
    t0 = time.time()
    circuit = _load_circuit(args.circuit)
    graph = build_lhgraph(circuit, args.filter_fraction)
    print(f"G-cells: {graph.n_gcells}")
    print(f"G-nets: {graph.n_gnets} ({graph.n_filtered} large G-nets removed)")
    print(f"H nnz: {graph.H.nnz}")
    print(f"A nnz: {graph.A.nnz}")
    outputs = []
    if args.dump_h:
        with open(args.dump_h, "w") as fh:
            fh.write(graph.H.to_triplet_text())
        outputs.append(args.dump_h)
    if args.dump_a:
        with open(args.dump_a, "w") as fh:
            fh.write(graph.A.to_triplet_text())
        outputs.append(args.dump_a)
    _write_manifest(args, "build", [args.circuit], outputs, None, None, t0)
    return EXIT_OK


def cmd_featurize(args) -> int:
    t0 = time.time()
    circuit = _load_circuit(args.circuit)
    graph = build_lhgraph(circuit, args.filter_fraction)
    features.write_feature_csv(args.out_csv, graph.Vc, features.GCELL_CHANNELS)
    outputs = [args.out_csv]
    if args.pgm_prefix:
        g = circuit.grid
        for i, name in enumerate(features.GCELL_CHANNELS):
            path = f"{args.pgm_prefix}_{name}.pgm"
            features.write_pgm(path, graph.Vc[:, i].reshape(g.ny, g.nx))
            outputs.append(path)
    print(f"wrote features for {graph.n_gcells} G-cells to {args.out_csv}")
    _write_manifest(args, "featurize", [args.circuit], outputs, None, None, t0)
    return EXIT_OK


def cmd_train(args) -> int:
    t0 = time.time()
    config = _resolve_config(args)
    data, norm = _prepare_dataset(args.circuit, args.labels, config)
    if args.model == "lhnn":
        params, metrics = model.train(data, config)
        summary = model.evaluate_model(data, params, config)
    else:
        params, metrics = baseline.train_mlp(data, config)
        summary = baseline.evaluate_mlp(data, params, config)
    model.save_model(args.out_checkpoint, params, norm)
    model.save_config(args.out_checkpoint + ".config", config)
    outputs = [args.out_checkpoint, args.out_checkpoint + ".config"]
    if args.metrics_csv:
        _write_metrics_csv(args.metrics_csv, metrics)
        outputs.append(args.metrics_csv)
    print(f"trained {args.model} for {config.epochs} epochs on {len(data)} circuits")
    print(f"final train F1={summary['f1']:.4f} ACC={summary['acc']:.4f}")
    _write_manifest(args, "train", list(args.circuit) + list(args.labels),
                    outputs, config.seed, config, t0)
    return EXIT_OK


def cmd_predict(args) -> int:
    t0 = time.time()
    config = model.load_config(args.checkpoint + ".config")
    params, norm = model.load_model(args.checkpoint)
    circuit = _load_circuit(args.circuit)
    graph = build_lhgraph(circuit, config.gnet_filter_fraction)
    vc0, vn0 = norm.apply(graph.Vc, graph.Vn)
    if args.model == "lhnn":
        pred = model.forward(model.full_graph_ops(graph), vc0, vn0, params, config)
    else:
        pred = baseline.mlp_forward(vc0, params, config)
    k = config.n_channels
    g = circuit.grid
    with open(args.out_csv, "w") as fh:
        fh.write(f"# grid {g.nx} {g.ny} channels {k}\n")
        cols = [f"cls_{i}" for i in range(k)] + [f"reg_{i}" for i in range(k)]
        fh.write("index," + ",".join(cols) + "\n")
        for i in range(graph.n_gcells):
            vals = list(pred.c_cls.value[i]) + list(pred.c_reg.value[i])
            fh.write(str(i) + "," + ",".join(f"{v:.9g}" for v in vals) + "\n")
    outputs = [args.out_csv]
    if args.pgm_prefix:
        for ch in range(k):
            path = f"{args.pgm_prefix}_cls{ch}.pgm"
            features.write_pgm(path, pred.c_cls.value[:, ch].reshape(g.ny, g.nx))
            outputs.append(path)
    print(f"wrote predictions for {graph.n_gcells} G-cells to {args.out_csv}")
    _write_manifest(args, "predict", [args.checkpoint, args.circuit], outputs, None, config, t0)
    return EXIT_OK


def _load_predictions(path: str):
    with open(path) as fh:
        header = fh.readline().split()
        k = int(header[header.index("channels") + 1])
        fh.readline()
        rows = [line.strip().split(",") for line in fh if line.strip()]
    data = np.array([[float(v) for v in row[1:]] for row in rows])
    return data[:, :k], data[:, k : 2 * k]


def cmd_eval(args) -> int:
    t0 = time.time()
    probs, _ = _load_predictions(args.pred)
    maps, nx, ny = evaluation.load_labels(args.labels)
    k = probs.shape[1]
    if k == 1:
        y_cls = maps.cong_h.reshape(-1, 1)
    else:
        y_cls = np.stack([maps.cong_h.reshape(-1), maps.cong_v.reshape(-1)], axis=1)
    f1, acc, counts = evaluation.f1_and_acc(probs, y_cls, threshold=args.threshold)
    report = (f"F1={f1:.4f} ACC={acc:.4f} "
              f"TP={counts['tp']} FP={counts['fp']} FN={counts['fn']} TN={counts['tn']}")
    print(report)
    outputs = []
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(report + "\n")
        outputs.append(args.out)
    _write_manifest(args, "eval", [args.pred, args.labels], outputs, None, None, t0)
    return EXIT_OK


ABLATION_COMBOS = [
    ("full", {}),
    ("no_featuregen_edges", {"use_featuregen_edges": False}),
    ("no_hypermp_edges", {"use_hypermp_edges": False}),
    ("no_latticemp_edges", {"use_latticemp_edges": False}),
    ("no_regression_head", {"use_regression_head": False}),
    ("no_gcell_features", {"use_gcell_features": False}),
]


def cmd_ablate(args) -> int:
    t0 = time.time()
    base_config = _resolve_config(args)
    data, norm = _prepare_dataset(args.circuit, args.labels, base_config)
    if args.eval_circuit:
        eval_data, _ = _prepare_dataset(args.eval_circuit, args.eval_labels, base_config, norm)
    else:
        eval_data = data
    rows = []
    for name, overrides in ABLATION_COMBOS:
        f1s = []
        for s in range(args.n_seeds):
            config = dataclasses.replace(base_config, **overrides, seed=base_config.seed + s)
            params, _ = model.train(data, config)
            summary = model.evaluate_model(eval_data, params, config)
            rows.append({"combo": name, "seed": config.seed,
                         "f1": summary["f1"], "acc": summary["acc"]})
            f1s.append(summary["f1"])
        print(f"{name:24s} mean F1={np.mean(f1s):.4f} over {args.n_seeds} seed(s)")
    with open(args.out, "w") as fh:
        fh.write("combo,seed,f1,acc\n")
        for r in rows:
            fh.write(f"{r['combo']},{r['seed']},{r['f1']:.9g},{r['acc']:.9g}\n")
    _write_manifest(args, "ablate", list(args.circuit) + list(args.labels),
                    [args.out], base_config.seed, base_config, t0)
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lhnn", description=__doc__)
    parser.add_argument("--manifest", default="manifests.jsonl",
                        help="append-only run manifest log")
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("gen", help="generate a synthetic circuit with oracle labels")
    p.add_argument("--nx", type=int, default=16)
    p.add_argument("--ny", type=int, default=16)
    p.add_argument("--n-cells", type=int, default=60)
    p.add_argument("--n-nets", type=int, default=40)
    p.add_argument("--pin-lo", type=int, default=2)
    p.add_argument("--pin-hi", type=int, default=5)
    p.add_argument("--terminal-fraction", type=float, default=0.1)
    p.add_argument("--net-locality", type=float, default=5.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--target-rate", type=float, default=None)
    p.add_argument("--out-circuit", required=True)
    p.add_argument("--out-labels", default=None)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("build", help="build the LH-graph and print a summary")
    p.add_argument("--circuit", required=True)
    p.add_argument("--filter-fraction", type=float, default=0.0025)
    p.add_argument("--dump-h", default=None)
    p.add_argument("--dump-a", default=None)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("featurize", help="emit G-cell feature maps")
    p.add_argument("--circuit", required=True)
    p.add_argument("--filter-fraction", type=float, default=0.0025)
    p.add_argument("--out-csv", required=True)
    p.add_argument("--pgm-prefix", default=None)
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("train", help="train LHNN or the MLP baseline")
    p.add_argument("--config", default=None)
    p.add_argument("--circuit", action="append", required=True)
    p.add_argument("--labels", action="append", required=True)
    p.add_argument("--model", choices=("lhnn", "mlp"), default="lhnn")
    p.add_argument("--out-checkpoint", required=True)
    p.add_argument("--metrics-csv", default=None)
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="run a checkpoint on a circuit")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--circuit", required=True)
    p.add_argument("--model", choices=("lhnn", "mlp"), default="lhnn")
    p.add_argument("--out-csv", required=True)
    p.add_argument("--pgm-prefix", default=None)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", help="score predictions against labels")
    p.add_argument("--pred", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="train and score the ablation grid")
    p.add_argument("--config", default=None)
    p.add_argument("--circuit", action="append", required=True)
    p.add_argument("--labels", action="append", required=True)
    p.add_argument("--eval-circuit", action="append", default=None)
    p.add_argument("--eval-labels", action="append", default=None)
    p.add_argument("--n-seeds", type=int, default=1)
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: missing file: {exc.filename or exc}", file=sys.stderr)
        return EXIT_MISSING_FILE
    except ParseError as exc:
        print(f"error: parse failure: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ConfigError as exc:
        print(f"error: config inconsistency: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingDivergedError as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
