"""Command-line entry points: synth, train, eval, ensemble, gradcheck, trace.

Exit codes: 0 success, 1 runtime failure, 2 usage error, 3 gradient check failure.
"""
import argparse
import hashlib
import json
import logging
import os
import sys

from . import __version__
from .checks import run_gradient_suite
from .data import SyntheticSpec, generate_synthetic, load_dataset, save_dataset, synthetic_graph
from .ensemble import ScoreFile, check_stream_set, ensemble, read_scores, write_scores
from .errors import ConfigError, DataError, MSSTError
from .graph import load_graph, save_graph
from .modality import MODALITIES, prepare, stream_tag
from .network import ModelConfig, forward, init_params
from .params import read_checkpoint
from .training import TrainConfig, evaluate, train

log = logging.getLogger("msst")


def _read_config(path):
    if path is None:
        return {}
    with open(path) as fh:
        raw = json.load(fh)
    flat = {}
    for key in ("model", "train"):
        flat.update(raw.pop(key, {}) or {})
    flat.update(raw)
    return flat


def _resolve(args, seqs, graph, need_train=True):
    raw = _read_config(args.config)
    if args.seed is not None:
        raw["seed"] = args.seed
    if not seqs:
        raise DataError(f"{args.data}: dataset is empty")
    raw.setdefault("num_joints", graph.num_joints)
    raw.setdefault("in_channels", seqs[0].channels)
    raw.setdefault("num_classes", max(2, 1 + max(s.label for s in seqs)))
    model = ModelConfig.from_dict(raw)
    tcfg = TrainConfig.from_dict(raw) if need_train else None
    return model, tcfg, raw


def _modality(args, raw, graph):
    modality = args.modality or raw.get("modality", "joint")
    k = args.k if args.k is not None else raw.get("k", 1)
    if modality.startswith("joint"):
        k = graph.nilpotency_index()
    return modality, int(k)


def _ids(seqs):
    return [s.id for s in seqs]


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _manifest(args, command, resolved, seed):
    blob = json.dumps(resolved, sort_keys=True).encode()
    return {
        "command": command,
        "argv": sys.argv[1:] if args.argv is None else list(args.argv),
        "config_hash": hashlib.sha256(blob).hexdigest(),
        "seed": seed,
        "code_version": __version__,
    }


def _file_sha(path):
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def cmd_synth(args):
    spec = SyntheticSpec(num_classes=args.classes, samples_per_class=args.per_class,
                         num_joints=args.joints, channels=args.channels,
                         frames=(args.frames_min, args.frames_max), noise=args.noise,
                         seed=args.seed)
    seqs = generate_synthetic(spec)
    save_dataset(seqs, args.out)
    if args.graph_out:
        save_graph(synthetic_graph(args.joints), args.graph_out)
    print(f"wrote {len(seqs)} samples to {args.out}")
    return 0


def cmd_train(args):
    graph = load_graph(args.graph)
    seqs = load_dataset(args.data)
    model, tcfg, raw = _resolve(args, seqs, graph)
    modality, k = _modality(args, raw, graph)
    tag = stream_tag(modality, k, graph)
    X, y = prepare(seqs, modality, graph, k, model.frames)
    X_val = y_val = val = None
    if args.val_data:
        val = load_dataset(args.val_data)
        X_val, y_val = prepare(val, modality, graph, k, model.frames)

    os.makedirs(args.out, exist_ok=True)
    resolved = {"model": model.to_dict(), "train": tcfg.to_dict(), "modality": modality,
                "k": k, "graph": graph.to_json()}
    _write_json(os.path.join(args.out, "config.json"), resolved)
    manifest = _manifest(args, "train", resolved, tcfg.seed)
    manifest["data_sha256"] = _file_sha(args.data)
    _write_json(os.path.join(args.out, "manifest.json"), manifest)

    store = init_params(model, graph, tcfg.seed)
    result = train(model, store, X, y, tcfg, X_val, y_val,
                   log_path=os.path.join(args.out, "metrics.jsonl"), checkpoint_dir=args.out)
    last = result.metrics[-1]
    print(f"[{tag}] final train_acc={last['train_acc']:.4f} val_acc={last['val_acc']}")
    if val is not None:
        acc, scores = evaluate(model, store, X_val, y_val)
        write_scores(ScoreFile(tag, _ids(val), scores, y_val.tolist()),
                     os.path.join(args.out, f"scores_{tag}.json"))
    if args.trace_attn:
        _, maps = forward(X[:1], model, store, trace=True)
        _write_json(os.path.join(args.out, "attention.json"), maps.to_json())
    return 0


def _load_for_inference(args):
    graph = load_graph(args.graph)
    seqs = load_dataset(args.data)
    model, _, raw = _resolve(args, seqs, graph, need_train=False)
    modality, k = _modality(args, raw, graph)
    store = init_params(model, graph, 0)
    store.load_state(read_checkpoint(args.checkpoint))
    X, y = prepare(seqs, modality, graph, k, model.frames)
    return graph, seqs, model, store, modality, k, X, y


def cmd_eval(args):
    graph, seqs, model, store, modality, k, X, y = _load_for_inference(args)
    tag = stream_tag(modality, k, graph)
    acc, scores = evaluate(model, store, X, y)
    print(f"[{tag}] accuracy {acc:.4f} on {len(y)} samples")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        write_scores(ScoreFile(tag, _ids(seqs), scores, y.tolist()),
                     os.path.join(args.out, f"scores_{tag}.json"))
        resolved = {"model": model.to_dict(), "modality": modality, "k": k,
                    "checkpoint_sha256": _file_sha(args.checkpoint)}
        _write_json(os.path.join(args.out, "manifest.json"),
                    _manifest(args, "eval", resolved, args.seed))
    if args.trace_attn:
        _trace(args, model, store, X)
    return 0


def _trace(args, model, store, X):
    i = args.sample
    if not 0 <= i < len(X):
        raise DataError(f"sample index {i} out of range for {len(X)} samples")
    _, maps = forward(X[i:i + 1], model, store, trace=True)
    target = args.out or "."
    os.makedirs(target, exist_ok=True)
    path = os.path.join(target, "attention.json")
    _write_json(path, maps.to_json())
    print(f"wrote {len(maps.entries)} attention maps to {path}")


def cmd_trace(args):
    _, _, model, store, _, _, X, _ = _load_for_inference(args)
    _trace(args, model, store, X)
    return 0


def cmd_ensemble(args):
    files = [read_scores(p) for p in args.scores]
    if args.expect:
        check_stream_set([f.tag for f in files], args.expect)
    acc, pred = ensemble(files)
    tags = "+".join(sorted(f.tag for f in files))
    if acc is None:
        print(f"[{tags}] fused {len(pred)} samples (no labels available)")
    else:
        print(f"[{tags}] fused accuracy {acc:.4f} on {len(pred)} samples")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        _write_json(os.path.join(args.out, "ensemble.json"),
                    {"tags": sorted(f.tag for f in files), "accuracy": acc,
                     "ids": list(files[0].ids), "predictions": pred.tolist()})
    return 0


def cmd_gradcheck(args):
    results = run_gradient_suite(seed=args.seed or 0, max_coords=args.coords)
    for r in results:
        print(r.line())
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} gradient checks passed")
    return 3 if failed else 0


def build_parser():
    parser = argparse.ArgumentParser(prog="msst", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, checkpoint=False):
        p.add_argument("--config", help="JSON with ModelConfig/TrainConfig fields")
        p.add_argument("--data", required=True, help="JSON Lines dataset")
        p.add_argument("--graph", required=True, help="graph JSON or bundled name")
        p.add_argument("--modality", choices=MODALITIES)
        p.add_argument("--k", type=int, help="bone power for bone modalities")
        p.add_argument("--seed", type=int)
        p.add_argument("--trace-attn", action="store_true")
        if checkpoint:
            p.add_argument("--checkpoint", required=True)
            p.add_argument("--sample", type=int, default=0, help="sample index to trace")

    p = sub.add_parser("synth", help="write a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--per-class", type=int, default=50)
    p.add_argument("--joints", type=int, default=10)
    p.add_argument("--channels", type=int, default=3)
    p.add_argument("--frames-min", type=int, default=48)
    p.add_argument("--frames-max", type=int, default=80)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--graph-out", help="also write the matching tree graph here")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train one modality stream")
    common(p)
    p.add_argument("--val-data", help="held-out JSON Lines dataset")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint and write a score file")
    common(p, checkpoint=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("trace", help="export attention maps for one sample")
    common(p, checkpoint=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser("ensemble", help="sum softmax scores of several streams")
    p.add_argument("scores", nargs="+")
    p.add_argument("--expect", choices=("4s", "6s"))
    p.add_argument("--out")
    p.set_defaults(func=cmd_ensemble)

    p = sub.add_parser("gradcheck", help="run the finite-difference suite")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--coords", type=int, default=2, help="probed coordinates per parameter")
    p.set_defaults(func=cmd_gradcheck)
    return parser


def run_cli(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    args.argv = argv
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (MSSTError, ConfigError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
