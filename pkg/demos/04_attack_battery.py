"""
Probing the scheme like an adversary
====================================

Each harness returns a JSON-serializable report with an honest baseline
rate, so "the attack got 10%" can be read against "guessing gets 10%".
"""

import numpy as np

from simsketch.attacks import (
    key_avalanche,
    linkage_attack,
    malleability_probe,
    preimage_bruteforce,
)
from simsketch.bitvec import BitVector
from simsketch.data import IndexedDataset, plaintext_bits_meta, protect_dataset
from simsketch.keys import SecretKey
from simsketch.ml import KModesConfig, kmodes
from simsketch.sketch import Scheme, SketchParams, Sketcher

rng = np.random.default_rng(3)
key = SecretKey.generate()


def show(report):
    print(f"  {report.name}: success {report.success_rate:.3f} "
          f"(baseline {report.baseline_rate:.3g}, {report.trials} trials)")


# with the key, enumeration finds exactly 2^(n_in - n_out) preimages:
# the sketch reveals n_out bits of information and not one more
print("preimage enumeration at toy scale (16 -> 8 bits):")
params = SketchParams(Scheme.BINARY_SAMPLE, 2, 16)
x = BitVector.from_bits(rng.integers(0, 2, 16))
report = preimage_bruteforce(Sketcher(key, params).sketch_bits(x), params, key)
show(report)
print(f"  preimage count {report.extra['preimage_count']} (2^8 = 256)")

# without the key, recovered bits are coin flips
print("keyless bit recovery:")
params = SketchParams(Scheme.BINARY_SAMPLE, "1.5", 24, n_out=16)
sketch = Sketcher(key, params).sketch_bits(x := BitVector.from_bits(rng.integers(0, 2, 24)))
report = preimage_bruteforce(sketch, params, plaintext=x, candidate_keys=50)
show(report)
print(f"  mean bit recovery {report.extra['mean_bit_recovery']:.3f} (chance = 0.5)")

# independent keys decorrelate sketches of the same record
print("key avalanche:")
payloads = np.packbits(rng.integers(0, 2, size=(5, 1_000), dtype=np.uint8), axis=1)
show(key_avalanche(SketchParams(Scheme.BINARY_SAMPLE, 3, 1_000), payloads, n_keys=50))

# distance profiles still link records when distances are preserved;
# this is the honest cost of similarity preservation, reported as a finding
print("linkage by distance profile:")
bits = rng.integers(0, 2, size=(50, 800), dtype=np.uint8)
plain = IndexedDataset(plaintext_bits_meta(800), np.arange(50), None,
                       np.packbits(bits, axis=1))
sk = Sketcher(key, SketchParams(Scheme.BINARY_SAMPLE, 3, 800))
protected = protect_dataset(plain, sk, permute_classes=False, key=key)
show(linkage_attack(plain, protected, np.arange(50)))

# forging a record that lands in a target cluster within a flip budget
print("malleability probe (10-bit budget):")
centers = kmodes(protected.bit_matrix(), protected.meta.nbits,
                 KModesConfig(k=2, seed=0)).centers
show(malleability_probe(protected, centers, budget_bits=10, trials=50))
