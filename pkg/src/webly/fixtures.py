"""Synthetic corpora and image sets with planted ground truth.

Everything here is seeded and deterministic. The generators back the test
suite and ``scripts/make_fixtures.py``; nothing in the pipeline depends on
them.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from .corpus import NgramRecord, POS, serialize_ngram_record
from .images import save_image

SIZE = 64
_YY, _XX = np.mgrid[0:SIZE, 0:SIZE].astype(np.float64)


# -- images -----------------------------------------------------------------

def grating_image(rng, angle: float, period: float = 8.0, jitter: float = 5.0, noise: float = 25.0):
    """Oriented sinusoidal texture with random phase and pixel noise."""
    th = np.deg2rad(angle + rng.normal(0, jitter))
    phase = rng.uniform(0, 2 * np.pi)
    img = 128 + 70 * np.sin(2 * np.pi / period * (_XX * np.cos(th) + _YY * np.sin(th)) + phase)
    return np.clip(img + rng.normal(0, noise, img.shape), 0, 255)


def ring_image(rng, period: float = 10.0, noise: float = 25.0):
    cy, cx = rng.uniform(24, 40, size=2)
    r = np.hypot(_YY - cy, _XX - cx)
    img = 128 + 70 * np.sin(2 * np.pi * r / period + rng.uniform(0, 2 * np.pi))
    return np.clip(img + rng.normal(0, noise, img.shape), 0, 255)


def checker_image(rng, cell: int = 8, noise: float = 25.0):
    oy, ox = rng.integers(0, cell, size=2)
    img = np.where(((_YY + oy) // cell + (_XX + ox) // cell) % 2 == 0, 60.0, 196.0)
    return np.clip(img + rng.normal(0, noise, img.shape), 0, 255)


def blob_image(rng, sigma: float = 3.0):
    """Smooth random intensity field; stands in for unrelated web images."""
    img = gaussian_filter(rng.normal(0, 1, (SIZE, SIZE)), sigma)
    return np.clip(128 + img / img.std() * 40, 0, 255)


def noise_image(rng):
    return rng.uniform(0, 255, (SIZE, SIZE))


def negative_image(rng):
    return blob_image(rng, sigma=rng.uniform(2.0, 5.0))


def blend_image(rng, make, weight: float = 0.35):
    """A faint pattern over a negative-like background."""
    return np.clip(weight * make(rng) + (1 - weight) * negative_image(rng), 0, 255)


PATTERNS = {
    "grating0": lambda rng: grating_image(rng, 0.0),
    "grating45": lambda rng: grating_image(rng, 45.0),
    "grating90": lambda rng: grating_image(rng, 90.0),
    "grating135": lambda rng: grating_image(rng, 135.0),
    "rings": ring_image,
    "checker": checker_image,
    "blobs": negative_image,
    "noise": noise_image,
}


def pattern_images(pattern: str, n: int, seed: int, outliers: int = 0):
    """``n`` images of one pattern; the last ``outliers`` are white noise."""
    rng = np.random.default_rng(seed)
    make = PATTERNS[pattern]
    return [make(rng) for _ in range(n - outliers)] + [noise_image(rng) for _ in range(outliers)]


def write_images(directory: os.PathLike, images, suffix: str = ".pgm"):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, img in enumerate(images):
        p = directory / f"{i:04d}{suffix}"
        save_image(p, img)
        paths.append(p)
    return paths


# -- corpora ------------------------------------------------------------------

RELEVANT_MODIFIERS = [
    "jumping", "rearing", "racing", "grazing", "galloping", "wild", "white", "black",
    "running", "trotting", "young", "brown", "arabian", "draft", "show", "dressage",
    "pony", "mare", "stallion", "foal",
]
_VERBS = {"jumping", "rearing", "racing", "grazing", "galloping", "running", "trotting"}
_POST_NOUNS = {"pony", "mare", "stallion", "foal"}


@dataclass
class PlantedCorpus:
    concept: str
    ngram_lines: list
    documents: list
    relevant: list
    noise: list
    synonyms: dict = field(default_factory=dict)

    @property
    def labels(self):
        return set(self.relevant) | set(self.synonyms)


def _phrase(concept, modifier):
    if modifier in _POST_NOUNS:
        return [(concept, POS.NOUN), (modifier, POS.NOUN)]
    pos = POS.VERB if modifier in _VERBS else POS.ADJ
    return [(modifier, pos), (concept, POS.NOUN)]


def planted_corpus(concept: str = "horse", n_relevant: int = 20, n_noise: int = 80,
                   n_docs: int = 2000, n_concept_docs: int = 200, seed: int = 0,
                   synonyms=None, relevant_modifiers=None, noise_modifiers=None,
                   false_removals: int = 1) -> PlantedCorpus:
    """N-gram records plus a document corpus with known relevant variations.

    Relevant modifiers co-occur with the concept in 25-120 documents (the
    last ``false_removals`` sit at 18, just past the default pruning cut);
    noise modifiers in 0-25. With 200 concept documents out of 2000 the 0.5
    center-distance cut falls at 20 co-occurrences. ``synonyms`` maps an extra modifier to a
    relevant one whose document set it copies exactly.
    """
    rng = np.random.default_rng(seed)
    if relevant_modifiers is None:
        relevant_mods = list(RELEVANT_MODIFIERS[:n_relevant])
        relevant_mods += [f"kind{i:02d}" for i in range(n_relevant - len(relevant_mods))]
    else:
        relevant_mods = list(relevant_modifiers)
    if noise_modifiers is None:
        noise_mods = [f"noise{i:02d}" for i in range(n_noise)]
    else:
        noise_mods = list(noise_modifiers)
    n_relevant = len(relevant_mods)
    synonyms = dict(synonyms or {})

    docs = [set() for _ in range(n_docs)]
    concept_docs = np.arange(n_concept_docs)
    other_docs = np.arange(n_concept_docs, n_docs)
    for d in concept_docs:
        docs[d].add(concept)
    for i in range(n_docs):
        docs[i].update(f"w{j}" for j in rng.integers(0, 300, size=6))

    co = {}
    for i, m in enumerate(relevant_mods):
        co[m] = 18 if i >= n_relevant - false_removals else int(rng.integers(25, 121))
    for m in noise_mods:
        co[m] = int(rng.integers(0, 26))
    for m, k in co.items():
        for d in rng.choice(concept_docs, size=k, replace=False):
            docs[d].add(m)
        for d in rng.choice(other_docs, size=int(rng.integers(5, 60)), replace=False):
            docs[d].add(m)
    for syn, target in synonyms.items():
        for doc in docs:
            if target in doc:
                doc.add(syn)

    lines = []
    years = (1990, 1995, 2000)
    for m in relevant_mods + noise_mods + list(synonyms):
        toks = _phrase(concept, m)
        # synonyms are the rarer surface form, so the planted target stays representative
        lo, hi = (5, 20) if m in synonyms else (20, 500)
        for y in years:
            lines.append(serialize_ngram_record(NgramRecord(tuple(toks), y, int(rng.integers(lo, hi)),
                                                            int(rng.integers(1, 5)))))
    # Decoys that discovery must reject.
    lines.append(f"the_DET {concept}_NOUN\t2000\t9000\t800")
    lines.append(f"{concept}_NOUN {concept}_NOUN\t2000\t50\t10")
    lines.append(f"big_ADJ brown_ADJ old_ADJ {concept}_NOUN\t2000\t40\t5")
    lines.append("malformed line")
    order = rng.permutation(len(lines))
    lines = [lines[i] for i in order]

    documents = [sorted(d, key=lambda t: (t != concept, t)) for d in docs]

    def phrase(m):
        return " ".join(s for s, _ in _phrase(concept, m))

    return PlantedCorpus(concept, lines, documents,
                         [phrase(m) for m in relevant_mods], [phrase(m) for m in noise_mods],
                         {phrase(s): phrase(t) for s, t in synonyms.items()})


def write_corpus(corpus: PlantedCorpus, directory: os.PathLike):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    ngrams = directory / "corpus.ngrams"
    docs = directory / "docs.txt"
    labels = directory / "labels.txt"
    ngrams.write_text("".join(line + "\n" for line in corpus.ngram_lines), encoding="utf-8")
    docs.write_text("".join(" ".join(d) + "\n" for d in corpus.documents), encoding="utf-8")
    labels.write_text("".join(p + "\n" for p in sorted(corpus.labels)), encoding="utf-8")
    return ngrams, docs, labels


# -- end-to-end fixture -------------------------------------------------------

# variation modifier -> (pattern, seed). "baby" and "little" share one
# pattern so their classifiers cross-validate; "social" looks like the
# negative pool and must fail the saliency gate.
PIPELINE_VARIATIONS = {
    "jumping": ("grating0", 11),
    "rearing": ("grating45", 12),
    "baby": ("grating135", 13),
    "little": ("grating135", 14),
    "social": ("blobs", 15),
}
PIPELINE_NOISE = ["stealer", "boy", "thief", "tax", "trade", "radish"]


@dataclass
class PipelineFixture:
    root: Path
    corpus: Path
    docs: Path
    labels: Path
    images: Path
    negatives: Path
    planted: PlantedCorpus


def build_pipeline_fixture(root: os.PathLike, concept: str = "horse", images_per_variation: int = 120,
                           outliers: int = 8, ambiguous: int = 14, n_negatives: int = 50,
                           seed: int = 0, variations=None) -> PipelineFixture:
    """Corpus, per-variation image directories and a negative pool under ``root``.

    Each image directory holds ``images_per_variation`` images: its pattern
    first, then (like a search engine's weaker results) ``outliers``
    white-noise images and ``ambiguous`` faint blends of the pattern with a
    negative background, shuffled among themselves at the tail of the ranking.
    """
    root = Path(root)
    variations = dict(PIPELINE_VARIATIONS if variations is None else variations)
    planted = planted_corpus(concept, relevant_modifiers=list(variations),
                             noise_modifiers=PIPELINE_NOISE, seed=seed, false_removals=0,
                             synonyms={"leaping": "jumping"})
    ngrams, docs, labels = write_corpus(planted, root)
    images = root / "images"
    for mod, (pattern, pseed) in variations.items():
        name = "_".join(s for s, _ in _phrase(concept, mod))
        rng = np.random.default_rng(seed * 1000 + pseed)
        n_clean = max(0, images_per_variation - outliers - ambiguous)
        clean = [PATTERNS[pattern](rng) for _ in range(n_clean)]
        tail = [noise_image(rng) for _ in range(outliers)]
        tail += [blend_image(rng, PATTERNS[pattern]) for _ in range(ambiguous)]
        imgs = (clean + [tail[i] for i in rng.permutation(len(tail))])[:images_per_variation]
        write_images(images / name, imgs)
    negatives = root / "negatives"
    write_images(negatives, pattern_images("blobs", n_negatives, seed * 1000 + 999))
    return PipelineFixture(root, ngrams, docs, labels, images, negatives, planted)
