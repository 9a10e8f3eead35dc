"""
k-NN on projected image sketches
================================

Grayscale images pass through a keyed signed projection with fixed
quantization. Euclidean geometry survives well enough that nearest
neighbor classification gives the same answers as on the raw pixels.
"""

import numpy as np

from simsketch.data import gen_synthetic_images, protect_dataset
from simsketch.keys import SecretKey
from simsketch.ml import knn_batch
from simsketch.sketch import Scheme, SimilarityMeasure, SketchParams, Sketcher

train, val = gen_synthetic_images(seed=2, n_train=3_000, n_val=300)
print(f"{len(train)} training images, {len(val)} queries, 28x28 grayscale")

key = SecretKey.generate()
sketcher = Sketcher(key, SketchParams(Scheme.REAL_PROJECTION, 3, 784, n_out=256))
prot_train = protect_dataset(train, sketcher, permute_classes=False, key=key)
prot_val = protect_dataset(val, sketcher, permute_classes=False, key=key)

measure = SimilarityMeasure.EUCLIDEAN
plain_pred = knn_batch(train.values(), train.labels, val.values(), 5, measure)
prot_pred = knn_batch(
    prot_train.values(), prot_train.labels, prot_val.values(), 5, measure
)

acc_plain = float(np.mean(plain_pred == val.labels))
acc_prot = float(np.mean(prot_pred == val.labels))
agree = float(np.mean(plain_pred == prot_pred))
print(f"plaintext accuracy {acc_plain:.4f}")
print(f"protected accuracy {acc_prot:.4f} (records are 256 bytes, not 784)")
print(f"prediction agreement {agree:.4f}")
