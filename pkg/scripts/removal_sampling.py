"""Empirical vs analytic removal frequency for single-round pruning."""
import argparse

import numpy as np

from webly.purifier import progressive_prune, removal_probability
from webly.records import ImageRecord
from webly.tables import render_table


class _Fixed:
    def train(self, pos, neg):
        pass

    def score(self, X):
        s = X[:, 0]
        return np.column_stack([s, 1 - s])


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--trials", type=int, default=10_000)
    a = p.parse_args()
    s1 = [0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 1.0]
    recs = [ImageRecord(f"v#{i}", "v", i, features=np.array([s, 0.0])) for i, s in enumerate(s1)]
    removed = np.zeros(len(s1))
    for seed in range(a.trials):
        kept, _ = progressive_prune(recs, _Fixed(), np.zeros((2, 2)), seed, max_rounds=1)
        alive = {r.image_id for r in kept}
        removed += [r.image_id not in alive for r in recs]
    rows = [["s1", "gap", "P analytic", "P empirical"]]
    for s, r in zip(s1, removed / a.trials):
        rows.append([f"{s:.2f}", f"{2 * s - 1:.2f}", f"{removal_probability((s, 1 - s)):.4f}", f"{r:.4f}"])
    print(render_table(rows))


if __name__ == "__main__":
    main()
