"""Show the symmetry properties of the encoder and pooling stage.

Three quick experiments:
  1. shuffling the points of a cloud leaves the global feature unchanged,
  2. sum pooling and mean pooling give the same feature once min-max
     normalization is applied,
  3. encoding a batch of clouds as one flattened matrix matches encoding
     each cloud on its own.
"""

import numpy as np

from penet import BatchLayout, Encoder, mean_pool, min_max_normalize, sum_pool

rng = np.random.default_rng(0)
enc = Encoder(din=3, k=256, depth=3, rng=np.random.default_rng(1),
              dtype=np.float64)

cloud = rng.standard_normal((500, 3))
shuffled = cloud[rng.permutation(len(cloud))]

feat = min_max_normalize(mean_pool(enc.forward(cloud)))
feat_shuffled = min_max_normalize(mean_pool(enc.forward(shuffled)))
print("1. permutation invariance")
print(f"   max |feature diff| after shuffling: "
      f"{np.abs(feat - feat_shuffled).max():.2e}")

by_sum = min_max_normalize(sum_pool(enc.forward(cloud)))
by_mean = min_max_normalize(mean_pool(enc.forward(cloud)))
print("2. sum vs mean pooling under min-max normalization")
print(f"   max |sum-pooled - mean-pooled|: {np.abs(by_sum - by_mean).max():.2e}")

clouds = [rng.standard_normal((64, 3)) for _ in range(8)]
flat = np.concatenate(clouds, axis=0)
layout = BatchLayout(bs=8, n_points=64)
batched = enc.forward(flat)
one_by_one = np.concatenate([enc.forward(c) for c in clouds], axis=0)
layout.check(batched.shape[0])
print("3. flattened-batch vs per-cloud encoding")
print(f"   max |row diff| over {layout.m} rows: "
      f"{np.abs(batched - one_by_one).max():.2e}")
