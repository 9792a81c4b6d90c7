"""Center-distance pruning on planted corpora over several seeds.

Prints the correct / noisy / precision table before and after pruning.
"""
import argparse

from webly.corpus import build_count_index, discover_variations, iter_ngram_records
from webly.fixtures import planted_corpus
from webly.semantics import (NgdPurificationReport, build_variation_graph,
                             prune_by_center_distance, stage_report)


def run(seed, threshold, n_relevant, n_noise):
    pc = planted_corpus(n_relevant=n_relevant, n_noise=n_noise, seed=seed)
    cands = discover_variations(pc.concept, iter_ngram_records(pc.ngram_lines))
    g = build_variation_graph(pc.concept, cands, build_count_index(pc.documents))
    g = prune_by_center_distance(g, threshold)
    rep = NgdPurificationReport(f"{pc.concept} (seed {seed})")
    rep.stages.append(stage_report("center-distance", [c.phrase for c in cands], g.phrases, pc.labels))
    return rep


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--relevant", type=int, default=20)
    p.add_argument("--noise", type=int, default=80)
    a = p.parse_args()
    for seed in range(a.seeds):
        print(run(seed, a.threshold, a.relevant, a.noise).table())
        print()


if __name__ == "__main__":
    main()
