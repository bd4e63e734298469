"""Sliding-window patches and exact inner-product retrieval, step by step.

A question image is cut into overlapping patches; each patch queries the
candidate table by inner product, and per-patch results merge by keeping each
candidate's best score.
"""

import numpy as np

from kivqa.corpus import EmbeddingTable
from kivqa.retrieval import patch_grid, retrieve_and_aggregate, top_k

# ── 1. The patch grid ──────────────────────────────────────────────────────
# Kernel 224 with stride 64. When the stride does not divide the leftover
# extent, a final flush patch hugs the image border.
for width, height in [(224, 224), (352, 224), (300, 224)]:
    patches = patch_grid(width, height, kernel=224, stride=64)
    offsets = [(p.x, p.y) for p in patches]
    print(f"{width}x{height}: {len(patches)} patches at {offsets}")

# ── 2. Exact top-k search ──────────────────────────────────────────────────
# A tiny candidate table in 2-D so the arithmetic is visible.
table = EmbeddingTable(
    2,
    {
        "pizza-article": np.array([1.0, 0.0]),
        "cat-article": np.array([0.0, 1.0]),
        "food-overview": np.array([0.6, 0.4]),
    },
)
query = np.array([1.0, 0.1])
print("\nquery scores:", top_k(query, table, k=3))

# ── 3. Aggregation keeps the maximum per candidate ─────────────────────────
# Patch A looks at the dish, patch B at the table setting; the same article
# can be retrieved by both, and its best view wins.
patch_a = np.array([0.8, 0.0])
patch_b = np.array([0.0, 0.9])
merged = retrieve_and_aggregate("q-pizza", [patch_a, patch_b], table, k=3)
print("aggregated:", merged.items)
print("note how each candidate carries the max of its per-patch scores")
