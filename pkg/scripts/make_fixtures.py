"""Write the synthetic end-to-end fixture (corpus, documents, images, negatives).

    python3 scripts/make_fixtures.py fixtures/ --seed 0
    webly run --concept horse --corpus fixtures/corpus.ngrams --docs fixtures/docs.txt \
        --images fixtures/images --negatives fixtures/negatives --labels fixtures/labels.txt
"""
import argparse

from webly.fixtures import build_pipeline_fixture


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("root")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--images-per-variation", type=int, default=120)
    p.add_argument("--outliers", type=int, default=8)
    p.add_argument("--ambiguous", type=int, default=14)
    a = p.parse_args()
    fx = build_pipeline_fixture(a.root, images_per_variation=a.images_per_variation,
                                outliers=a.outliers, ambiguous=a.ambiguous, seed=a.seed)
    for name in ("corpus", "docs", "labels", "images", "negatives"):
        print(f"{name:10s} {getattr(fx, name)}")


if __name__ == "__main__":
    main()
