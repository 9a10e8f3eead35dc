"""Plaintext-vs-protected evaluation harness.

Runs the identical clustering and classification pipeline on a plaintext
corpus and on its keyed sketches with equal iteration budgets, then reports
container sizes, phase timings (median of several runs, warm cache, I/O
excluded), the Rand index between the plaintext partition and the
transposed protected partition, and the k-NN label agreement on the
validation split.
"""

from __future__ import annotations

import json
import os
import platform
import tempfile
import time
from dataclasses import dataclass, field

import numpy as np
import scipy

from . import __version__ as _pkg_version
from .data import (
    IndexedDataset,
    class_permutations,
    protect_dataset,
    write_hai1,
)
from .keys import SecretKey
from .ml import (
    KModesConfig,
    kmodes,
    knn_batch,
    rand_index,
    transpose_partition,
)
from .sketch import Scheme, Sketcher, SketchParams, SimilarityMeasure

REPORT_VERSION = 1

# wall-clock fields excluded from reproducibility comparisons
TIMING_FIELDS = ("timings", "speedup")


@dataclass(frozen=True)
class EvalReport:
    dataset_ids: dict
    delta: str
    sizes: dict
    size_ratio: float
    timings: dict
    speedup: float
    rand_index: float
    knn_agreement: float
    seeds: dict
    tool_versions: dict
    config: dict = field(default_factory=dict)
    report_version: int = REPORT_VERSION

    def __post_init__(self):
        want_ratio = self.sizes["plaintext_bytes"] / self.sizes["protected_bytes"]
        if abs(self.size_ratio - want_ratio) > 1e-9:
            raise ValueError("size_ratio must equal plaintext_bytes/protected_bytes")
        cluster = self.timings["cluster"]
        want_speedup = cluster["plaintext_ms"] / cluster["protected_ms"]
        if abs(self.speedup - want_speedup) > 1e-9:
            raise ValueError("speedup must equal cluster plaintext_ms/protected_ms")

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True, indent=2)

    def as_dict(self) -> dict:
        return {
            "report_version": self.report_version,
            "dataset_ids": self.dataset_ids,
            "delta": self.delta,
            "sizes": self.sizes,
            "size_ratio": self.size_ratio,
            "timings": self.timings,
            "speedup": self.speedup,
            "rand_index": self.rand_index,
            "knn_agreement": self.knn_agreement,
            "seeds": self.seeds,
            "tool_versions": self.tool_versions,
            "config": self.config,
        }

    @staticmethod
    def from_json(text: str) -> "EvalReport":
        obj = json.loads(text)
        obj = {k: v for k, v in obj.items()}
        version = obj.pop("report_version")
        if version != REPORT_VERSION:
            raise ValueError(f"unsupported report version {version}")
        return EvalReport(report_version=version, **obj)

    def format_table(self) -> str:
        rows = [
            ("delta", self.delta),
            ("container bytes (plain)", f"{self.sizes['plaintext_bytes']:,}"),
            ("container bytes (protected)", f"{self.sizes['protected_bytes']:,}"),
            ("size ratio", f"{self.size_ratio:.3f}"),
            ("payload ratio", f"{self.sizes['payload_ratio']:.4f}"),
            ("cluster ms (plain)", f"{self.timings['cluster']['plaintext_ms']:.1f}"),
            ("cluster ms (protected)", f"{self.timings['cluster']['protected_ms']:.1f}"),
            ("speed-up", f"{self.speedup:.2f}"),
            ("rand index", f"{self.rand_index:.4f}"),
            ("knn agreement", f"{self.knn_agreement:.4f}"),
        ]
        if "classify" in self.timings:
            rows.insert(
                8,
                (
                    "classify ms (plain/protected)",
                    f"{self.timings['classify']['plaintext_ms']:.1f} / "
                    f"{self.timings['classify']['protected_ms']:.1f}",
                ),
            )
        width = max(len(name) for name, _ in rows)
        return "\n".join(f"{name.ljust(width)}  {value}" for name, value in rows)


def _timed(fn, runs: int, warmup: int):
    """Median wall ms over `runs` calls after `warmup` discarded calls."""
    if runs < 1:
        raise ValueError("need at least one timed run")
    for _ in range(warmup):
        fn()
    samples = []
    for _ in range(runs):
        t0 = time.perf_counter()
        fn()
        samples.append((time.perf_counter() - t0) * 1e3)
    return float(np.median(samples)), samples


def check_thresholds(
    report: EvalReport,
    min_rand: float = 0.98,
    min_speedup: float = 2.0,
    min_knn: float = 0.98,
) -> list:
    """Failed-threshold descriptions; empty means the report passes."""
    fails = []
    if report.rand_index < min_rand:
        fails.append(f"rand_index {report.rand_index:.4f} < {min_rand}")
    if report.speedup < min_speedup:
        fails.append(f"speedup {report.speedup:.2f} < {min_speedup}")
    if report.knn_agreement < min_knn:
        fails.append(f"knn_agreement {report.knn_agreement:.4f} < {min_knn}")
    return fails


def run_bench(
    train: IndexedDataset,
    val: IndexedDataset,
    key: SecretKey,
    params: SketchParams,
    cluster_cfg: KModesConfig,
    *,
    knn_k: int = 5,
    runs: int = 5,
    warmup: int = 1,
    out_dir=None,
    dataset_ids=None,
    seeds=None,
    threads=None,
) -> EvalReport:
    """Full plaintext-vs-protected comparison on a bit-record corpus."""
    if params.scheme is not Scheme.BINARY_SAMPLE:
        raise ValueError("the native bench pipeline runs on bit corpora")
    sketcher = Sketcher(key, params)
    prot_train = protect_dataset(train, sketcher, permute_classes=True, key=key)
    prot_val = protect_dataset(val, sketcher, permute_classes=False, key=key)

    tmp = None
    if out_dir is None:
        tmp = tempfile.TemporaryDirectory(prefix="simsketch-bench-")
        out_dir = tmp.name
    try:
        plain_path = os.path.join(out_dir, "train-plaintext.hai1")
        prot_path = os.path.join(out_dir, "train-protected.hai1")
        write_hai1(train, plain_path)
        write_hai1(prot_train, prot_path)
        plain_bytes = os.path.getsize(plain_path)
        prot_bytes = os.path.getsize(prot_path)
    finally:
        if tmp is not None:
            tmp.cleanup()

    nbits_plain = train.meta.nbits
    nbits_prot = prot_train.meta.nbits
    mat_plain = train.bit_matrix()
    mat_prot = prot_train.bit_matrix()

    # clustering phase: identical config, equal iteration budgets; the runs
    # are deterministic, so re-running for timing reproduces the same result
    plain_result = {}
    prot_result = {}

    def cluster_plain():
        plain_result["r"] = kmodes(mat_plain, nbits_plain, cluster_cfg)

    def cluster_prot():
        prot_result["r"] = kmodes(mat_prot, nbits_prot, cluster_cfg)

    plain_ms, plain_samples = _timed(cluster_plain, runs, warmup)
    prot_ms, prot_samples = _timed(cluster_prot, runs, warmup)
    plain_part = plain_result["r"].partition(train.indexes)
    prot_part = prot_result["r"].partition(prot_train.indexes)
    transposed = transpose_partition(
        prot_part, class_permutations(key, train), train.class_members()
    )
    rand = rand_index(plain_part, transposed)

    # classification phase on the validation split
    val_mat_plain = val.bit_matrix()
    val_mat_prot = prot_val.bit_matrix()
    measure = SimilarityMeasure.HAMMING_SIMILARITY
    pred_plain = {}
    pred_prot = {}

    def classify_plain():
        pred_plain["p"] = knn_batch(
            mat_plain, train.labels, val_mat_plain, knn_k, measure, nbits=nbits_plain
        )

    def classify_prot():
        pred_prot["p"] = knn_batch(
            mat_prot, prot_train.labels, val_mat_prot, knn_k, measure, nbits=nbits_prot
        )

    knn_plain_ms, knn_plain_samples = _timed(classify_plain, runs, warmup)
    knn_prot_ms, knn_prot_samples = _timed(classify_prot, runs, warmup)
    agreement = float(np.mean(pred_plain["p"] == pred_prot["p"]))

    sizes = {
        "plaintext_bytes": plain_bytes,
        "protected_bytes": prot_bytes,
        "plaintext_payload_bytes": train.payload_bytes_total(),
        "protected_payload_bytes": prot_train.payload_bytes_total(),
        "payload_ratio": train.payload_bytes_total() / prot_train.payload_bytes_total(),
    }
    timings = {
        "cluster": {
            "plaintext_ms": plain_ms,
            "protected_ms": prot_ms,
            "samples_plaintext": plain_samples,
            "samples_protected": prot_samples,
        },
        "classify": {
            "plaintext_ms": knn_plain_ms,
            "protected_ms": knn_prot_ms,
            "samples_plaintext": knn_plain_samples,
            "samples_protected": knn_prot_samples,
        },
    }
    return EvalReport(
        dataset_ids=dataset_ids or {"train": "train", "val": "val"},
        delta=params.delta_str,
        sizes=sizes,
        size_ratio=plain_bytes / prot_bytes,
        timings=timings,
        speedup=plain_ms / prot_ms,
        rand_index=float(rand),
        knn_agreement=agreement,
        seeds=seeds or {"kmodes": cluster_cfg.seed},
        tool_versions={
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "simsketch": _pkg_version,
        },
        config={
            "k": cluster_cfg.k,
            "iterations": cluster_cfg.iterations,
            "measure": cluster_cfg.measure.value,
            "knn_k": knn_k,
            "runs": runs,
            "warmup": warmup,
            "threads": threads,
            "n_iter_plaintext": plain_result["r"].n_iter,
            "n_iter_protected": prot_result["r"].n_iter,
        },
    )
