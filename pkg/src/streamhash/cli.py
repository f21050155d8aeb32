"""Command-line driver: generate, split, train, encode, evaluate.

Every run is reproducible from (dataset, plan, config, seed); the training
report embeds SHA-256 fingerprints of all four. Reports are JSON lines, one
record per completed round. Failures print a machine-readable JSON error
record on stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

from . import __version__
from .data import CodeMatrix, Dataset, LabelMatrix, read_imat, read_lmat, write_imat
from .engine import (
    EngineConfig,
    encode_query_batch,
    initial_state,
    load_state,
    save_state,
    train_round,
)
from .evaluation import mean_average_precision, precision_at_k, rank_by_hamming
from .data import load_feature_matrix
from .scenarios import (
    ScenarioPlan,
    chunk_for_round,
    generate_synthetic,
    queries_for_round,
    split_category_incremental,
    split_iid,
)

DEFAULT_P_AT_K = (10,)


def _parse_int_list(text):
    return [int(x) for x in text.split(",") if x.strip()]


def _parse_cardinality(text):
    out = {}
    for part in text.split(","):
        k, _, p = part.partition(":")
        out[int(k)] = float(p)
    return out


def _sha256_bytes(data):
    return hashlib.sha256(data).hexdigest()


def _sha256_file(path):
    return _sha256_bytes(Path(path).read_bytes())


def _sha256_dir(directory):
    directory = Path(directory)
    parts = []
    for path in sorted(p for p in directory.rglob("*") if p.is_file()):
        parts.append(f"{path.relative_to(directory)}:{_sha256_file(path)}")
    return _sha256_bytes("\n".join(parts).encode("utf-8"))


def _config_from_args(args):
    kernelized = ()
    if args.kernel_modalities.strip().lower() not in ("", "none"):
        kernelized = tuple(_parse_int_list(args.kernel_modalities))
    return EngineConfig(
        bits=args.bits,
        theta=args.theta,
        delta=args.delta,
        ridge=args.ridge,
        iterations=args.iters,
        anchor_count=args.anchors,
        kernelized_modalities=kernelized,
        supervision=args.supervision,
        seed=args.seed,
        fine_grained=not args.no_fine_grained,
    )


def _evaluate_round(state, dataset, plan, round_, p_at_k):
    query_mods, query_labels = queries_for_round(dataset, plan, round_)
    started = time.perf_counter()
    codes = encode_query_batch(state, query_mods)
    ranking = rank_by_hamming(codes, state.database_codes)
    value = mean_average_precision(ranking, query_labels, state.database_labels)
    p_values = {
        str(k): precision_at_k(ranking, query_labels, state.database_labels, k)
        for k in p_at_k
        if 1 <= k <= state.database_size
    }
    wall_ms = (time.perf_counter() - started) * 1000.0
    return {
        "map": value,
        "p_at_k": p_values,
        "n_queries": codes.count,
        "n_database": state.database_size,
        "eval_ms": wall_ms,
    }


def _cmd_generate(args):
    generate_synthetic(
        n_instances=args.n,
        n_categories=args.categories,
        modalities=args.modalities,
        dims=_parse_int_list(args.dims),
        label_cardinality=_parse_cardinality(args.label_cardinality),
        noise=args.noise,
        seed=args.seed,
        noise_asymmetry=args.noise_asymmetry,
        latent_dim=args.latent_dim,
        out_dir=args.out,
    )
    print(json.dumps({"dataset": str(args.out), "sha256": _sha256_dir(args.out)}))
    return 0


def _cmd_split(args):
    dataset = Dataset.load(args.dataset)
    if args.scenario == "iid":
        if not args.chunks:
            raise ValueError("iid split needs --chunks")
        plan = split_iid(dataset, _parse_int_list(args.chunks), args.test_size, args.seed)
    else:
        if not args.rounds:
            raise ValueError("category-incremental split needs --rounds")
        plan = split_category_incremental(
            dataset,
            args.rounds,
            overlap=(args.scenario == "overlap"),
            train_ratio=args.ratio,
            seed=args.seed,
        )
    plan.save(args.out)
    print(json.dumps({"plan": str(args.out), "rounds": plan.round_count}))
    return 0


def _cmd_train(args):
    dataset = Dataset.load(args.dataset)
    plan = ScenarioPlan.load(args.plan)
    config = _config_from_args(args)
    fingerprints = {
        "dataset": _sha256_dir(args.dataset),
        "plan": _sha256_file(args.plan),
        "config": _sha256_bytes(
            json.dumps(config.to_dict(), sort_keys=True).encode("utf-8")
        ),
        "seed": args.seed,
    }
    report_path = Path(args.report) if args.report else None
    records = [
        {
            "type": "run",
            "version": __version__,
            "config": config.to_dict(),
            "fingerprints": fingerprints,
            "artifacts": {"state": str(args.state), "report": args.report},
        }
    ]
    state = initial_state(config)
    p_at_k = tuple(_parse_int_list(args.p_at_k))
    for round_ in range(1, plan.round_count + 1):
        registered_before = len(state.registry)
        chunk = chunk_for_round(dataset, plan, round_)
        started = time.perf_counter()
        state = train_round(state, chunk)
        wall_ms = (time.perf_counter() - started) * 1000.0
        save_state(state, args.state)
        record = {
            "type": "round",
            "round": round_,
            "r": config.bits,
            "wall_ms": wall_ms,
            "n_train": chunk.count,
            "n_new_categories": len(state.registry) - registered_before,
        }
        record.update(_evaluate_round(state, dataset, plan, round_, p_at_k))
        records.append(record)
    lines = "\n".join(json.dumps(r) for r in records) + "\n"
    if report_path is not None:
        report_path.write_text(lines, encoding="utf-8")
    else:
        sys.stdout.write(lines)
    return 0


def _cmd_encode(args):
    state = load_state(args.state)
    paths = [p for p in args.queries.split(",") if p.strip()]
    modalities = [
        load_feature_matrix(path, modality_id=i) for i, path in enumerate(paths, start=1)
    ]
    fine_grained = False if args.no_fine_grained else None
    codes = encode_query_batch(state, modalities, fine_grained=fine_grained)
    write_imat(args.out, codes.values)
    print(json.dumps({"codes": str(args.out), "n": codes.count, "r": codes.bits}))
    return 0


def _cmd_evaluate(args):
    started = time.perf_counter()
    query_codes = CodeMatrix(read_imat(args.codes))
    db_codes = CodeMatrix(read_imat(args.database_codes))
    query_labels = LabelMatrix(read_lmat(args.query_labels))
    db_labels = LabelMatrix(read_lmat(args.database_labels))
    ranking = rank_by_hamming(query_codes, db_codes)
    value = mean_average_precision(ranking, query_labels, db_labels, cutoff=args.cutoff)
    p_values = {
        str(k): precision_at_k(ranking, query_labels, db_labels, k)
        for k in _parse_int_list(args.p_at_k)
        if 1 <= k <= db_codes.count
    }
    metrics = {
        "round": args.round,
        "r": query_codes.bits,
        "map": value,
        "p_at_k": p_values,
        "n_queries": query_codes.count,
        "n_database": db_codes.count,
        "wall_ms": (time.perf_counter() - started) * 1000.0,
    }
    text = json.dumps(metrics)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)
    return 0


def _add_config_flags(parser):
    parser.add_argument("--bits", type=int, default=32, help="code length r in bits")
    parser.add_argument("--theta", type=float, default=1.0, help="hash-function ridge weight")
    parser.add_argument("--delta", type=float, default=1.0, help="auxiliary ridge weight")
    parser.add_argument("--ridge", type=float, default=1e-6, help="category-code solve ridge")
    parser.add_argument("--iters", type=int, default=5, help="alternating iterations")
    parser.add_argument("--anchors", type=int, default=500, help="RBF anchor count")
    parser.add_argument(
        "--kernel-modalities",
        default="1",
        help="comma-separated modality ids to kernelize, or 'none'",
    )
    parser.add_argument(
        "--supervision",
        default="pseudo:0",
        help="provider spec: file:<path> | pseudo:<seed>[:<k>] | hadamard[:<k>]",
    )
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument(
        "--no-fine-grained",
        action="store_true",
        help="disable per-instance fusion weights (uniform weighting)",
    )


def build_parser():
    parser = argparse.ArgumentParser(
        prog="streamhash",
        description="Online multi-modal hashing: train round-by-round, encode, evaluate.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic multi-modal dataset")
    p.add_argument("--out", required=True, help="dataset directory to write")
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--categories", type=int, default=12)
    p.add_argument("--modalities", type=int, default=2)
    p.add_argument("--dims", default="64,32", help="per-modality feature dimensions")
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument(
        "--noise-asymmetry",
        type=float,
        default=1.0,
        help="per-instance noise multiplier applied to one random modality",
    )
    p.add_argument("--label-cardinality", default="1:0.6,2:0.4")
    p.add_argument("--latent-dim", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("split", help="write a scenario plan for a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True, help="plan.json path")
    p.add_argument("--scenario", choices=("iid", "overlap", "non_overlap"), default="iid")
    p.add_argument("--chunks", default="", help="iid: comma-separated chunk sizes")
    p.add_argument("--test-size", type=int, default=0, help="iid: up-front test set size")
    p.add_argument("--rounds", type=int, default=0, help="incremental: number of rounds")
    p.add_argument("--ratio", type=float, default=0.9, help="incremental: train fraction")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_split)

    p = sub.add_parser("train", help="train round-by-round and report per-round metrics")
    p.add_argument("--dataset", required=True)
    p.add_argument("--plan", required=True)
    p.add_argument("--state", required=True, help="state directory (overwritten per round)")
    p.add_argument("--report", default=None, help="JSON-lines report path (default stdout)")
    p.add_argument("--p-at-k", default="10", help="comma-separated precision@k cutoffs")
    _add_config_flags(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("encode", help="encode query features with a saved state")
    p.add_argument("--state", required=True)
    p.add_argument("--queries", required=True, help="comma-separated per-modality .fmat paths")
    p.add_argument("--out", required=True, help="output .imat codes path")
    p.add_argument("--no-fine-grained", action="store_true")
    p.set_defaults(func=_cmd_encode)

    p = sub.add_parser("evaluate", help="rank codes and emit metrics JSON")
    p.add_argument("--codes", required=True, help="query codes .imat")
    p.add_argument("--database-codes", required=True, help="database codes .imat")
    p.add_argument("--query-labels", required=True, help="query labels .lmat")
    p.add_argument("--database-labels", required=True, help="database labels .lmat")
    p.add_argument("--cutoff", type=int, default=None)
    p.add_argument("--p-at-k", default="10")
    p.add_argument("--round", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_evaluate)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # surface every failure as a JSON error record
        record = {"type": "error", "error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(record), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
