"""Picking a small discriminative codebook from object responses.

Responses are summed per image, per category and over the whole training
set.  Candidates must rank high overall and within at least one category.
The comparison below is against the same number of random codewords.
"""

import tempfile

import numpy as np

from vsad.core import PatchManifest
from vsad.pipeline import PipelineConfig, run_pipeline
from vsad.selection import aggregate_responses, select_codewords

# the two-category worked example
p = np.array([[0.6, 0.3, 0.1, 0.0],
              [0.0, 0.3, 0.1, 0.6]])
man = PatchManifest.from_counts(["kitchen_1", "forest_1"], [1, 1], [0, 1])
table = aggregate_responses(p, man)
res = select_codewords(table, K=2)
print("dataset response", table.global_, "-> selected", res.selected, "at depth T =", res.T_final)

with tempfile.TemporaryDirectory() as out:
    for K in (5, 10, 25):
        accs = []
        for strategy in ("semantic", "random"):
            cfg = PipelineConfig.benchmark(0, {"selection": {"k": K, "strategy": strategy}})
            accs.append(run_pipeline(cfg, f"{out}/{strategy}{K}")[0].overall_accuracy)
        print(f"K={K:2d}: selected {accs[0]:.3f}  random {accs[1]:.3f}")
