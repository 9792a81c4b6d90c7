"""HOG features, linear SVMs and visual purification of word variations."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DegenerateTrainingSet, UndecodableImage
from .images import resize_bilinear
from .tables import render_table
from .unionfind import UnionFind, canonical_groups

REASON_NON_SALIENT = "non-salient"
_EPS = 1e-12


@dataclass(frozen=True)
class HogLayout:
    size: int = 64
    cell: int = 8
    block: int = 2
    bins: int = 9
    clip: float = 0.2

    @property
    def cells(self):
        return self.size // self.cell

    @property
    def blocks(self):
        return self.cells - self.block + 1

    @property
    def block_len(self):
        return self.block * self.block * self.bins

    @property
    def n_features(self):
        return self.blocks * self.blocks * self.block_len


DEFAULT_LAYOUT = HogLayout()


def gradients(img: np.ndarray):
    """Central differences; the one-pixel border gets zero gradient."""
    gx = np.zeros_like(img)
    gy = np.zeros_like(img)
    gx[:, 1:-1] = img[:, 2:] - img[:, :-2]
    gy[1:-1, :] = img[2:, :] - img[:-2, :]
    return gx, gy


def cell_histograms(image: np.ndarray, layout: HogLayout = DEFAULT_LAYOUT) -> np.ndarray:
    """Per-cell unsigned orientation histograms, shape (cells, cells, bins).

    Each pixel's gradient magnitude is split linearly between the two
    nearest bin centres (circularly over 0..180 degrees).
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2 or img.size == 0 or not np.all(np.isfinite(img)):
        raise UndecodableImage("expected a finite 2-D grayscale raster")
    img = resize_bilinear(img, (layout.size, layout.size))
    gx, gy = gradients(img)
    mag = np.hypot(gx, gy)
    ang = np.degrees(np.arctan2(gy, gx)) % 180.0
    width = 180.0 / layout.bins
    pos = ang / width - 0.5
    lo = np.floor(pos)
    frac = pos - lo
    lo = lo.astype(int) % layout.bins
    hi = (lo + 1) % layout.bins
    votes = np.zeros(img.shape + (layout.bins,))
    rows, cols = np.indices(img.shape)
    np.add.at(votes, (rows, cols, lo), mag * (1 - frac))
    np.add.at(votes, (rows, cols, hi), mag * frac)
    c, n = layout.cell, layout.cells
    return votes.reshape(n, c, n, c, layout.bins).sum(axis=(1, 3))


def extract_hog(image: np.ndarray, layout: HogLayout = DEFAULT_LAYOUT) -> np.ndarray:
    """Whole-image HOG descriptor with L2-Hys block normalisation.

    Blocks are emitted in row-major order; inside a block the layout is
    (cell row, cell col, bin).
    """
    hist = cell_histograms(image, layout)
    b, nb = layout.block, layout.blocks
    blocks = np.empty((nb, nb, layout.block_len))
    for by in range(nb):
        for bx in range(nb):
            blocks[by, bx] = hist[by:by + b, bx:bx + b].ravel()
    blocks = _l2hys(blocks.reshape(-1, layout.block_len), layout.clip)
    return blocks.ravel()


def _l2hys(v: np.ndarray, clip: float) -> np.ndarray:
    norm = np.linalg.norm(v, axis=1, keepdims=True)
    v = np.where(norm > _EPS, v / np.where(norm > _EPS, norm, 1.0), 0.0)
    v = np.minimum(v, clip)
    norm = np.linalg.norm(v, axis=1, keepdims=True)
    return np.where(norm > _EPS, v / np.where(norm > _EPS, norm, 1.0), 0.0)


@dataclass(frozen=True)
class LinearClassifier:
    weights: np.ndarray
    bias: float

    def decision(self, X) -> np.ndarray:
        return np.asarray(X, dtype=np.float64) @ self.weights + self.bias

    def predict(self, X) -> np.ndarray:
        """+1 for the positive class, -1 otherwise."""
        return np.where(self.decision(X) > 0, 1, -1)


def train_linear_classifier(pos, neg, epochs: int = 200, lam: Optional[float] = None) -> LinearClassifier:
    """Full-batch Pegasos on the L2-regularised hinge loss.

    Minimises ``lam/2 |w|^2 + mean(hinge)`` with step ``1/(lam t)``. The bias
    is an extra constant feature and is regularised with the weights.
    ``lam`` defaults to 1 / number of training samples.
    """
    pos = np.atleast_2d(np.asarray(pos, dtype=np.float64))
    neg = np.atleast_2d(np.asarray(neg, dtype=np.float64))
    if pos.size == 0 or neg.size == 0:
        raise DegenerateTrainingSet("both classes need at least one sample")
    X = np.vstack([pos, neg])
    X = np.hstack([X, np.ones((len(X), 1))])
    y = np.concatenate([np.ones(len(pos)), -np.ones(len(neg))])
    n = len(X)
    lam = 1.0 / n if lam is None else lam
    w = np.zeros(X.shape[1])
    for t in range(1, epochs + 1):
        eta = 1.0 / (lam * t)
        viol = y * (X @ w) < 1
        grad = lam * w - (y[viol] @ X[viol]) / n
        w = w - eta * grad
    return LinearClassifier(w[:-1].copy(), float(w[-1]))


@dataclass
class VariationImageSplit:
    pos_train: np.ndarray
    pos_val: np.ndarray
    neg_train: np.ndarray
    neg_val: np.ndarray
    pos_train_ids: list = field(default_factory=list)
    pos_val_ids: list = field(default_factory=list)

    @property
    def validation(self):
        X = np.vstack([self.pos_val, self.neg_val])
        y = np.concatenate([np.ones(len(self.pos_val), int), -np.ones(len(self.neg_val), int)])
        return X, y


def split_sizes(n: int, n_train: int, n_val: int):
    """Use the configured sizes when enough samples exist, else split proportionally."""
    if n >= n_train + n_val:
        return n_train, n_val
    if n < 2:
        raise DegenerateTrainingSet(f"need at least 2 samples to split, got {n}")
    v = min(n - 1, max(1, round(n * n_val / (n_train + n_val))))
    return n - v, v


def seeded_split(n: int, n_train: int, n_val: int, seed: int):
    """Index arrays (train, val) from a seeded permutation of range(n)."""
    n_train, n_val = split_sizes(n, n_train, n_val)
    perm = np.random.default_rng(seed).permutation(n)
    return perm[:n_train], perm[n_train:n_train + n_val]


def make_split(pos, neg_train, neg_val, seed: int, n_train: int = 75, n_val: int = 25,
               ids: Optional[Sequence] = None) -> VariationImageSplit:
    pos = np.asarray(pos, dtype=np.float64)
    ids = list(range(len(pos))) if ids is None else list(ids)
    tr, va = seeded_split(len(pos), n_train, n_val, seed)
    return VariationImageSplit(pos[tr], pos[va], np.asarray(neg_train), np.asarray(neg_val),
                               [ids[i] for i in tr], [ids[i] for i in va])


def _counts(classifier: LinearClassifier, split: VariationImageSplit):
    X, y = split.validation
    if len(y) == 0:
        raise DegenerateTrainingSet("empty validation set")
    pred = classifier.predict(X)
    return pred, y


def saliency_score(classifier: LinearClassifier, split: VariationImageSplit) -> float:
    """Fraction of pooled validation images (positive + negative) classified correctly."""
    pred, y = _counts(classifier, split)
    return int(np.sum(pred == y)) / len(y)


def validation_metrics(classifier: LinearClassifier, split: VariationImageSplit):
    """(accuracy, precision, recall) of the positive class on validation data."""
    pred, y = _counts(classifier, split)
    tp = int(np.sum((pred == 1) & (y == 1)))
    fp = int(np.sum((pred == 1) & (y == -1)))
    fn = int(np.sum((pred == -1) & (y == 1)))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    return int(np.sum(pred == y)) / len(y), precision, recall


def filter_salient(variations: Sequence[str], scores, threshold: float = 0.7):
    """Split into (kept, removed); a score <= threshold is non-salient.

    ``scores`` is a mapping or a sequence aligned with ``variations``.
    Removed entries are (variation, reason, score).
    """
    if not isinstance(scores, dict):
        scores = dict(zip(variations, scores))
    kept, removed = [], []
    for v in variations:
        if scores[v] <= threshold:
            removed.append((v, REASON_NON_SALIENT, scores[v]))
        else:
            kept.append(v)
    return kept, removed


def visual_edge(classifier_j: LinearClassifier, split_i: VariationImageSplit) -> float:
    """Accuracy of variation j's classifier on variation i's validation data."""
    return saliency_score(classifier_j, split_i)


@dataclass
class VisualGraph:
    """Node scores V[i], directed edges E[(i, j)] = C_j on validation set i."""

    names: list
    V: dict
    E: dict
    frequency: dict = field(default_factory=dict)
    groups: UnionFind = field(default_factory=UnionFind)

    def __post_init__(self):
        for n in self.names:
            self.groups.add(n)

    def rank_key(self, name):
        return (-self.V[name], -self.frequency.get(name, 0), name)

    def visual_groups(self) -> dict:
        return canonical_groups(self.groups, key=self.rank_key)


def build_visual_graph(names, classifiers: dict, splits: dict, frequency=None) -> VisualGraph:
    V = {n: saliency_score(classifiers[n], splits[n]) for n in names}
    E = {}
    for i in names:
        for j in names:
            E[(i, j)] = visual_edge(classifiers[j], splits[i])
    return VisualGraph(list(names), V, E, dict(frequency or {}))


def merge_visual_groups(graph: VisualGraph, slack: float = 0.1, mode: str = "either") -> VisualGraph:
    """Union i and j when E_ij + slack >= V_j.

    ``mode="either"`` merges if the inequality holds for one orientation,
    ``"both"`` requires it for (i, j) and (j, i).
    """
    if mode not in ("either", "both"):
        raise ValueError(f"unknown merge mode {mode!r}")

    def fires(i, j):
        return graph.E[(i, j)] + slack >= graph.V[j] - _EPS

    groups = graph.groups.copy()
    for i, j in itertools.combinations(sorted(graph.names), 2):
        a, b = fires(i, j), fires(j, i)
        if (a or b) if mode == "either" else (a and b):
            groups.union(i, j)
    return VisualGraph(list(graph.names), dict(graph.V), dict(graph.E), dict(graph.frequency), groups)


def saliency_table(rows) -> str:
    """Render (concept, variation, S_i, precision, recall) rows."""
    out = [["Concept", "Variation", "S_i", "Precision rate", "Recall rate"]]
    for concept, variation, s, p, r in rows:
        out.append([concept, variation, f"{s:.2f}", f"{p:.4f}", f"{r:.4f}"])
    return render_table(out)
