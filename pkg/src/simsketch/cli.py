"""Command line interface for the whole pipeline.

Subcommands: genkey, gen-synth, ingest-idx, protect, cluster, classify,
rand-index, bench, attack. Exit codes: 0 success, 2 usage error, 3 data
error, 4 threshold failure in `bench --check`.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .attacks import (
    key_avalanche,
    linkage_attack,
    malleability_probe,
    model_extraction_check,
    preimage_bruteforce,
)
from .bench import check_thresholds, run_bench
from .bitvec import BitVector
from .data import (
    DataFormatError,
    PayloadKind,
    SynthConfig,
    class_permutations,
    gen_synthetic_cyber,
    protect_dataset,
    protection_index_map,
    read_hai1,
    read_idx,
    write_hai1,
)
from .keys import SecretKey, load_key_file, save_key_file
from .ml import (
    KModesConfig,
    Partition,
    kmodes,
    knn_batch,
    rand_index,
    transpose_partition,
)
from .sketch import Scheme, Sketcher, SketchParams, SimilarityMeasure


class UsageError(Exception):
    pass


_MEASURES = {
    "hamming": SimilarityMeasure.HAMMING_SIMILARITY,
    "and": SimilarityMeasure.AND_COUNT,
    "euclidean": SimilarityMeasure.EUCLIDEAN,
    "cosine": SimilarityMeasure.COSINE,
}
_SCHEMES = {s.value: s for s in Scheme}


def _threads(args) -> int:
    # recorded for reproducibility; the numpy kernels are single-threaded
    if args.threads is not None:
        return args.threads
    env = os.environ.get("HAI_THREADS")
    return int(env) if env else 1


def _build(ctor, /, *args, **kwargs):
    """Construct params/config objects, mapping bad flag values to usage errors."""
    try:
        return ctor(*args, **kwargs)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _load_key(path) -> SecretKey:
    try:
        return load_key_file(path)
    except FileNotFoundError as exc:
        raise DataFormatError(f"{path}: no such key file") from exc


def _write_or_print(text: str, out):
    if out:
        with open(out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _write_partition(partition: Partition, path):
    payload = {
        "indexes": [int(v) for v in partition.indexes],
        "assignments": [int(v) for v in partition.assignments],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)
        fh.write("\n")


def _read_partition(path) -> Partition:
    try:
        with open(path) as fh:
            obj = json.load(fh)
        return Partition(np.asarray(obj["indexes"]), np.asarray(obj["assignments"]))
    except (OSError, json.JSONDecodeError, KeyError, ValueError) as exc:
        raise DataFormatError(f"{path}: not a partition file ({exc})") from exc


# -- subcommand handlers -------------------------------------------------------


def cmd_genkey(args) -> int:
    save_key_file(SecretKey.generate(), args.out, force=args.force)
    print(f"wrote key file {args.out}")
    return 0


def cmd_gen_synth(args) -> int:
    cfg = _build(
        SynthConfig,
        seed=args.seed,
        n_train=args.n_train,
        n_val=args.n_val,
        n_feat=args.n_feat,
        classes=args.classes,
        p_base=args.p_base,
        p_flip=args.p_flip,
    )
    train, val = gen_synthetic_cyber(cfg)
    write_hai1(train, args.out_train)
    write_hai1(val, args.out_val)
    print(
        f"wrote {len(train)} train + {len(val)} val records "
        f"of {cfg.n_feat} bits, {cfg.classes} classes"
    )
    return 0


def cmd_ingest_idx(args) -> int:
    dataset = read_idx(args.images, labels_path=args.labels)
    write_hai1(dataset, args.out)
    print(f"wrote {len(dataset)} records of {dataset.meta.n_in} values to {args.out}")
    return 0


def cmd_protect(args) -> int:
    key = _load_key(args.key)
    dataset = read_hai1(getattr(args, "in"))
    params = _build(
        SketchParams,
        scheme=_SCHEMES[args.scheme],
        delta=args.delta,
        n_in=dataset.meta.n_in,
        n_out=args.n_out,
        quant_bits=args.quant_bits,
    )
    sketcher = Sketcher(key, params)
    protected = protect_dataset(
        dataset, sketcher, permute_classes=args.permute_classes, key=key
    )
    write_hai1(protected, args.out, strip_labels=args.strip_labels)
    in_size = os.path.getsize(getattr(args, "in"))
    out_size = os.path.getsize(args.out)
    print(
        f"protected {len(dataset)} records: {dataset.meta.record_len_bytes} -> "
        f"{protected.meta.record_len_bytes} bytes/record, "
        f"container ratio {in_size / out_size:.3f}"
    )
    return 0


def cmd_cluster(args) -> int:
    dataset = read_hai1(getattr(args, "in"))
    if dataset.meta.payload_kind is not PayloadKind.BITS:
        raise DataFormatError("clustering runs on bit payloads")
    cfg = _build(
        KModesConfig,
        k=args.k,
        iterations=args.iterations,
        seed=args.seed,
        measure=_MEASURES[args.measure],
    )
    result = kmodes(dataset.bit_matrix(), dataset.meta.nbits, cfg)
    partition = result.partition(dataset.indexes)
    if args.transpose:
        if args.key is None:
            raise UsageError("--transpose needs --key")
        key = _load_key(args.key)
        partition = transpose_partition(
            partition, class_permutations(key, dataset), dataset.class_members()
        )
    _write_partition(partition, args.out)
    print(
        f"clustered {len(dataset)} records into {args.k} clusters "
        f"({result.n_iter} iterations, objective {result.objective_history[-1]})"
    )
    return 0


def cmd_classify(args) -> int:
    train = read_hai1(args.train)
    queries = read_hai1(args.queries)
    if train.labels is None:
        raise DataFormatError("training container must carry labels")
    measure = _MEASURES[args.measure]
    if train.meta.payload_kind is PayloadKind.BITS:
        preds = knn_batch(
            train.bit_matrix(),
            train.labels,
            queries.bit_matrix(),
            args.k,
            measure,
            nbits=train.meta.nbits,
        )
    else:
        preds = knn_batch(
            train.values(), train.labels, queries.values(), args.k, measure
        )
    payload = {
        "indexes": [int(v) for v in queries.indexes],
        "predictions": [int(v) for v in preds],
    }
    with open(args.out, "w") as fh:
        json.dump(payload, fh)
        fh.write("\n")
    msg = f"classified {len(queries)} records with k={args.k}"
    if queries.labels is not None:
        acc = float(np.mean(preds == queries.labels))
        msg += f", accuracy {acc:.4f}"
    print(msg)
    return 0


def cmd_rand_index(args) -> int:
    value = rand_index(_read_partition(args.a), _read_partition(args.b))
    print(f"{value:.6f}")
    return 0


def cmd_bench(args) -> int:
    key = _load_key(args.key)
    train = read_hai1(args.train)
    val = read_hai1(args.val)
    params = _build(
        SketchParams,
        scheme=Scheme.BINARY_SAMPLE,
        delta=args.delta,
        n_in=train.meta.n_in,
        n_out=args.n_out,
    )
    cfg = _build(
        KModesConfig,
        k=args.k,
        iterations=args.iterations,
        seed=args.seed,
        measure=_MEASURES[args.measure],
    )
    report = run_bench(
        train,
        val,
        key,
        params,
        cfg,
        knn_k=args.knn_k,
        runs=args.runs,
        dataset_ids={"train": args.train, "val": args.val},
        seeds={"kmodes": args.seed},
        threads=_threads(args),
    )
    print(report.format_table())
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(report.to_json() + "\n")
    if args.check:
        failures = check_thresholds(report)
        for line in failures:
            print(f"CHECK FAILED: {line}", file=sys.stderr)
        if failures:
            return 4
    return 0


def _attack_preimage(args):
    key = _load_key(args.key)
    params = _build(
        SketchParams, Scheme.BINARY_SAMPLE, args.delta, args.n_in, n_out=args.n_out
    )
    rng = np.random.default_rng(args.seed)
    x = BitVector.from_bits(rng.integers(0, 2, size=args.n_in, dtype=np.uint8))
    sk = Sketcher(key, params)
    return preimage_bruteforce(sk.sketch_bits(x), params, key, seed=args.seed)


def _attack_keyless(args):
    params = _build(
        SketchParams, Scheme.BINARY_SAMPLE, args.delta, args.n_in, n_out=args.n_out
    )
    rng = np.random.default_rng(args.seed)
    x = BitVector.from_bits(rng.integers(0, 2, size=args.n_in, dtype=np.uint8))
    true_key = SecretKey(bytes(rng.integers(1, 256, size=32, dtype=np.uint8)))
    sketch = Sketcher(true_key, params).sketch_bits(x)
    return preimage_bruteforce(
        sketch,
        params,
        None,
        plaintext=x,
        candidate_keys=args.candidates,
        seed=args.seed,
    )


def _attack_linkage(args):
    key = _load_key(args.key)
    plain = read_hai1(args.plain)
    protected = read_hai1(args.protected)
    truth = protection_index_map(plain, key)
    return linkage_attack(plain, protected, truth, seed=args.seed)


def _attack_avalanche(args):
    params = _build(
        SketchParams, _SCHEMES[args.scheme], args.delta, args.n_in, n_out=args.n_out
    )
    rng = np.random.default_rng(args.seed)
    if params.scheme is Scheme.BINARY_SAMPLE:
        bits = rng.integers(0, 2, size=(8, args.n_in), dtype=np.uint8)
        payloads = np.packbits(bits, axis=1)
    else:
        payloads = rng.integers(0, 256, size=(8, args.n_in), dtype=np.uint8)
    return key_avalanche(params, payloads, n_keys=args.keys, seed=args.seed)


def _attack_malleability(args):
    protected = read_hai1(getattr(args, "in"))
    cfg = _build(KModesConfig, k=args.k, iterations=args.iterations, seed=args.cluster_seed)
    result = kmodes(protected.bit_matrix(), protected.meta.nbits, cfg)
    return malleability_probe(
        protected,
        result.centers,
        budget_bits=args.budget,
        trials=args.trials,
        seed=args.seed,
        strategy=args.strategy,
    )


def _attack_extraction(args):
    a = read_hai1(args.a)
    b = read_hai1(args.b)
    cfg = _build(KModesConfig, k=args.k, iterations=args.iterations, seed=args.cluster_seed)
    return model_extraction_check(a, b, cfg, seed=args.seed)


_ATTACKS = {
    "preimage": _attack_preimage,
    "keyless": _attack_keyless,
    "linkage": _attack_linkage,
    "avalanche": _attack_avalanche,
    "malleability": _attack_malleability,
    "extraction": _attack_extraction,
}


def cmd_attack(args) -> int:
    report = _ATTACKS[args.attack](args)
    _write_or_print(report.to_json(), args.out)
    return 0


# -- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="simsketch",
        description="Keyed similarity-preserving sketches: protect, analyze, attack.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument(
        "--threads",
        type=int,
        default=None,
        help="worker count recorded in reports (env HAI_THREADS); results are thread-count independent",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("genkey", help="write a fresh key file (64 hex chars)")
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true", help="overwrite an existing file")
    p.set_defaults(handler=cmd_genkey)

    p = sub.add_parser("gen-synth", help="generate the synthetic bit-record corpus")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out-train", required=True)
    p.add_argument("--out-val", required=True)
    p.add_argument("--n-train", type=int, default=2_000)
    p.add_argument("--n-val", type=int, default=200)
    p.add_argument("--n-feat", type=int, default=49_955)
    p.add_argument("--classes", type=int, default=2)
    p.add_argument("--p-base", type=float, default=0.5)
    p.add_argument("--p-flip", type=float, default=0.1)
    p.set_defaults(handler=cmd_gen_synth)

    p = sub.add_parser("ingest-idx", help="convert IDX image/label files")
    p.add_argument("--images", required=True)
    p.add_argument("--labels", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_ingest_idx)

    p = sub.add_parser("protect", help="sketch a container under a key")
    p.add_argument("--key", required=True)
    p.add_argument("--delta", required=True, help="decimal compression rate")
    p.add_argument("--scheme", choices=sorted(_SCHEMES), required=True)
    p.add_argument("--in", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--n-out", type=int, default=0, help="override output length")
    p.add_argument("--quant-bits", type=int, default=8)
    p.add_argument("--permute-classes", action="store_true")
    p.add_argument("--strip-labels", action="store_true")
    p.set_defaults(handler=cmd_protect)

    p = sub.add_parser("cluster", help="k-modes over a bit container")
    p.add_argument("--in", required=True)
    p.add_argument("--out", required=True, help="partition JSON path")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--iterations", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--measure", choices=["hamming", "and"], default="hamming")
    p.add_argument(
        "--transpose",
        action="store_true",
        help="rewrite the partition to plaintext indexes (needs --key)",
    )
    p.add_argument("--key", default=None)
    p.set_defaults(handler=cmd_cluster)

    p = sub.add_parser("classify", help="k-NN prediction for query records")
    p.add_argument("--train", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--out", required=True, help="predictions JSON path")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--measure", choices=sorted(_MEASURES), default="hamming")
    p.set_defaults(handler=cmd_classify)

    p = sub.add_parser("rand-index", help="compare two partition files")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.set_defaults(handler=cmd_rand_index)

    p = sub.add_parser("bench", help="plaintext vs protected pipeline comparison")
    p.add_argument("--key", required=True)
    p.add_argument("--train", required=True)
    p.add_argument("--val", required=True)
    p.add_argument("--delta", required=True)
    p.add_argument("--n-out", type=int, default=0)
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--iterations", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--measure", choices=["hamming", "and"], default="hamming")
    p.add_argument("--knn-k", type=int, default=5)
    p.add_argument("--runs", type=int, default=5)
    p.add_argument("--out", default=None, help="write the JSON report here")
    p.add_argument(
        "--check",
        action="store_true",
        help="exit 4 unless rand/speed-up/agreement thresholds pass",
    )
    p.set_defaults(handler=cmd_bench)

    p = sub.add_parser("attack", help="run an attack harness, print a JSON report")
    asub = p.add_subparsers(dest="attack", required=True)

    a = asub.add_parser("preimage", help="with-key exhaustive preimage count")
    a.add_argument("--key", required=True)
    a.add_argument("--n-in", type=int, required=True)
    a.add_argument("--n-out", type=int, default=0)
    a.add_argument("--delta", default="2")
    a.add_argument("--seed", type=int, default=0)

    a = asub.add_parser("keyless", help="bit recovery without the key")
    a.add_argument("--n-in", type=int, required=True)
    a.add_argument("--n-out", type=int, default=0)
    a.add_argument("--delta", default="2")
    a.add_argument("--candidates", type=int, default=100)
    a.add_argument("--seed", type=int, default=0)

    a = asub.add_parser("linkage", help="distance-profile re-identification")
    a.add_argument("--key", required=True)
    a.add_argument("--plain", required=True)
    a.add_argument("--protected", required=True)
    a.add_argument("--seed", type=int, default=0)

    a = asub.add_parser("avalanche", help="independent-key output decorrelation")
    a.add_argument("--scheme", choices=sorted(_SCHEMES), required=True)
    a.add_argument("--n-in", type=int, required=True)
    a.add_argument("--n-out", type=int, default=0)
    a.add_argument("--delta", default="3")
    a.add_argument("--keys", type=int, default=100)
    a.add_argument("--seed", type=int, default=0)

    a = asub.add_parser("malleability", help="forge admissible cluster members")
    a.add_argument("--in", required=True, help="protected bit container")
    a.add_argument("--k", type=int, required=True)
    a.add_argument("--iterations", type=int, default=20)
    a.add_argument("--cluster-seed", type=int, default=0)
    a.add_argument("--budget", type=int, required=True, help="bit-flip budget")
    a.add_argument("--trials", type=int, default=100)
    a.add_argument(
        "--strategy", choices=["random-flips", "toward-center"], default="random-flips"
    )
    a.add_argument("--seed", type=int, default=0)

    a = asub.add_parser("extraction", help="model consistency across samples")
    a.add_argument("--a", required=True)
    a.add_argument("--b", required=True)
    a.add_argument("--k", type=int, required=True)
    a.add_argument("--iterations", type=int, default=20)
    a.add_argument("--cluster-seed", type=int, default=0)
    a.add_argument("--seed", type=int, default=0)

    for name in _ATTACKS:
        pa = asub.choices[name]
        pa.add_argument("--out", default=None, help="write the JSON report here")
    p.set_defaults(handler=cmd_attack)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (DataFormatError, FileExistsError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
