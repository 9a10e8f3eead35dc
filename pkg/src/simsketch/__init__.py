"""Keyed similarity-preserving sketches with an evaluation and attack bed.

The package sketches bit records and u8-vector records under a 256-bit
secret key so that similarity structure survives (clustering and nearest-
neighbour results are preserved and transposable back through keyed
per-class index permutations), then measures what that costs and what it
leaks: container sizes, clustering speed-ups, preimage counts, key
avalanche, linkage and malleability attack rates.
"""

__version__ = "0.1.0"

from .bitvec import (
    BitVector,
    Tie,
    and_count_rows,
    and_similarity,
    hamming,
    hamming_rows,
    majority_mode,
    matrix_from_payloads,
    popcount,
    vector_from_row,
)
from .keys import KeyedRandom, SecretKey, derive_stream, load_key_file, save_key_file
from .sketch import (
    IndexPermutation,
    Scheme,
    Sketcher,
    SketchParams,
    SimilarityMeasure,
    derive_permutation,
    derive_positions,
    similarity,
)
from .ml import (
    KModesConfig,
    KModesResult,
    Partition,
    cluster_records,
    kmodes,
    knn,
    knn_batch,
    rand_index,
    transpose_partition,
)
from .data import (
    DataFormatError,
    DatasetMeta,
    IndexedDataset,
    PayloadKind,
    SynthConfig,
    class_permutations,
    export_record_files,
    gen_synthetic_cyber,
    gen_synthetic_images,
    protect_dataset,
    protection_index_map,
    read_hai1,
    read_idx,
    write_hai1,
    write_idx,
)
from .attacks import (
    AttackReport,
    key_avalanche,
    linkage_attack,
    malleability_probe,
    model_extraction_check,
    preimage_bruteforce,
)
from .bench import EvalReport, check_thresholds, run_bench

__all__ = [
    "__version__",
    "AttackReport",
    "BitVector",
    "DataFormatError",
    "DatasetMeta",
    "EvalReport",
    "IndexPermutation",
    "IndexedDataset",
    "KModesConfig",
    "KModesResult",
    "KeyedRandom",
    "Partition",
    "PayloadKind",
    "Scheme",
    "SecretKey",
    "SimilarityMeasure",
    "SketchParams",
    "Sketcher",
    "SynthConfig",
    "Tie",
    "and_count_rows",
    "and_similarity",
    "check_thresholds",
    "class_permutations",
    "cluster_records",
    "derive_permutation",
    "derive_positions",
    "derive_stream",
    "export_record_files",
    "gen_synthetic_cyber",
    "gen_synthetic_images",
    "hamming",
    "hamming_rows",
    "key_avalanche",
    "kmodes",
    "knn",
    "knn_batch",
    "linkage_attack",
    "load_key_file",
    "majority_mode",
    "malleability_probe",
    "matrix_from_payloads",
    "model_extraction_check",
    "popcount",
    "preimage_bruteforce",
    "protect_dataset",
    "protection_index_map",
    "rand_index",
    "read_hai1",
    "read_idx",
    "run_bench",
    "save_key_file",
    "similarity",
    "transpose_partition",
    "vector_from_row",
    "write_hai1",
    "write_idx",
]
