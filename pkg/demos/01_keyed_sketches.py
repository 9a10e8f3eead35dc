"""
Keyed sketches in five minutes
==============================

A sketch is a compressed, keyed stand-in for a record. Whoever holds the
key can keep computing similarity on the sketches; everyone else sees
high-entropy bytes of one third the size.
"""

import numpy as np

from simsketch.bitvec import BitVector, hamming
from simsketch.keys import SecretKey
from simsketch.sketch import Scheme, SketchParams, Sketcher

rng = np.random.default_rng(0)
key = SecretKey.generate()

# a 49,955-bit record compresses to 16,651 bits at rate delta=3
params = SketchParams(Scheme.BINARY_SAMPLE, delta=3, n_in=49_955)
sketcher = Sketcher(key, params)
print(f"bit construction: {params.n_in} bits -> {params.n_out} bits")

x_bits = rng.integers(0, 2, params.n_in, dtype=np.uint8)
y_bits = x_bits.copy()
flips = rng.choice(params.n_in, size=3_000, replace=False)
y_bits[flips] ^= 1

x, y = BitVector.from_bits(x_bits), BitVector.from_bits(y_bits)
sx, sy = sketcher.sketch_bits(x), sketcher.sketch_bits(y)

# the sketch Hamming distance is the plaintext distance restricted to the
# keyed position sample: about distance/delta, never a surprise
print(f"plaintext distance {hamming(x, y)}, sketch distance {hamming(sx, sy)}")
print(f"expected around {hamming(x, y) / 3:.0f}")

# a different key gives an unrelated sketch of the same record
other = Sketcher(SecretKey.generate(), params)
d = hamming(sx, other.sketch_bits(x)) / params.n_out
print(f"same record, fresh key: normalized distance {d:.3f} (want ~0.5)")

# the numeric construction quantizes a keyed signed projection
real = Sketcher(key, SketchParams(Scheme.REAL_PROJECTION, 3, 784, n_out=256))
img = rng.integers(0, 256, 784, dtype=np.uint8)
code = real.sketch_values(img)
print(f"value construction: 784 bytes -> {code.size} codes, "
      f"first five {code[:5].tolist()}")
