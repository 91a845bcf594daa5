"""Semantic codebook and VSAD encoding on a tiny hand-checkable example.

Three 1-d patches with soft assignments to two object classes.  The codebook
holds a probability-weighted mean and spread per class; VSAD then measures
how a new image's patches deviate from them.
"""

import numpy as np

from vsad.codebook import build_codebook
from vsad.encoder import VsadConfig, encode_vsad

f = np.array([[0.0], [1.0], [3.0]])
p = np.array([[1.0, 0.0],
              [0.5, 0.5],
              [0.0, 1.0]])
cb = build_codebook(f, p)
print("prior pi   ", cb.pi)
print("means mu   ", cb.mu.ravel())          # 1/3 and 7/3
print("variances  ", (cb.sigma ** 2).ravel())  # 2/9 and 8/9

# one patch at f=1, shared evenly between both classes
raw = encode_vsad(np.array([[1.0]]), np.array([[0.5, 0.5]]), VsadConfig(cb, normalize=False))
print("raw [S1 G1 S2 G2]       ", np.round(raw.data, 5))
out = encode_vsad(np.array([[1.0]]), np.array([[0.5, 0.5]]), VsadConfig(cb))
print("signed-sqrt + L2        ", np.round(out.data, 5))

# encoding the codebook's own training patches gives zero: nothing deviates
# from statistics estimated on those very patches
rng = np.random.default_rng(0)
f = rng.normal(size=(500, 8))
p = rng.dirichlet(np.full(6, 0.3), size=500)
cb = build_codebook(f, p)
self_code = encode_vsad(f, p, VsadConfig(cb, normalize=False))
print("self-encoding max |entry|", np.abs(self_code.data).max())
