"""Image-stage purification: exemplar-LDA re-ranking and progressive pruning."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from functools import cached_property
from typing import Optional, Protocol, Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.special import expit

from .errors import (DimensionMismatch, EmptySurvivorSet, InsufficientNegatives,
                     ProviderFailure)
from .records import feature_matrix

LN2 = math.log(2.0)
_MASK64 = (1 << 64) - 1


# -- exemplar-LDA ---------------------------------------------------------

@dataclass
class BackgroundStats:
    mean: np.ndarray
    cov: np.ndarray

    @cached_property
    def factor(self):
        return cho_factor(self.cov, lower=True)

    @property
    def dim(self):
        return len(self.mean)


def background_stats(negatives, reg: float = 0.01, floor: float = 1e-6) -> BackgroundStats:
    """Sample mean and covariance of the negatives, plus ``lam * I``.

    ``lam = reg * trace(cov) / dim``, never below ``floor``.
    """
    X = np.asarray(negatives, dtype=np.float64)
    if X.ndim != 2 or len(X) < 2:
        raise InsufficientNegatives("background statistics need at least 2 negatives")
    mean = X.mean(axis=0)
    cov = np.cov(X, rowvar=False, ddof=1).reshape(X.shape[1], X.shape[1])
    lam = max(reg * np.trace(cov) / X.shape[1], floor)
    cov = cov + lam * np.eye(X.shape[1])
    cov = (cov + cov.T) / 2
    return BackgroundStats(mean, cov)


@dataclass(frozen=True)
class ExemplarDetector:
    weights: np.ndarray
    exemplar_id: Optional[str] = None


def train_exemplar_lda(x_e, stats: BackgroundStats, exemplar_id=None) -> ExemplarDetector:
    """w = cov^-1 (x_e - mean) via the cached Cholesky factor."""
    x_e = np.asarray(x_e, dtype=np.float64)
    if x_e.shape != stats.mean.shape:
        raise DimensionMismatch(f"exemplar has shape {x_e.shape}, background {stats.mean.shape}")
    return ExemplarDetector(cho_solve(stats.factor, x_e - stats.mean), exemplar_id)


def train_exemplar_ldas(X, stats: BackgroundStats, ids: Sequence) -> list:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != stats.dim:
        raise DimensionMismatch(f"exemplars have dim {X.shape[1]}, background {stats.dim}")
    W = cho_solve(stats.factor, (X - stats.mean).T).T
    return [ExemplarDetector(w, i) for w, i in zip(W, ids)]


def elda_scores(images, detectors, top_k: int = 5) -> np.ndarray:
    """Mean of each image's top-k detector responses, ignoring its own exemplar."""
    if not images:
        return np.empty(0)
    if not detectors:
        return np.zeros(len(images))
    X = feature_matrix(images)
    W = np.vstack([d.weights for d in detectors])
    R = W @ X.T  # detectors x images
    det_ids = [d.exemplar_id for d in detectors]
    scores = np.zeros(len(images))
    for j, rec in enumerate(images):
        col = R[:, j]
        own = [e for e, i in enumerate(det_ids) if i is not None and i == rec.image_id]
        if own:
            col = np.delete(col, own)
        if len(col) == 0:
            continue
        k = min(top_k, len(col))
        scores[j] = np.sort(col)[::-1][:k].mean()
    return scores


def elda_rank(images, detectors, top_k: int = 5):
    """Input indices in descending score order (stable on ties), plus scores."""
    scores = elda_scores(images, detectors, top_k)
    order = sorted(range(len(images)), key=lambda j: (-scores[j], j))
    return order, scores


def elda_select(images, detectors, keep: int = 100, top_k: int = 5) -> list:
    order, _ = elda_rank(images, detectors, top_k)
    return [images[j] for j in order[:keep]]


# -- probabilistic pruning ------------------------------------------------

@dataclass(frozen=True)
class ClassScorePair:
    s1: float
    s2: float

    def __post_init__(self):
        if not (0.0 <= self.s1 <= 1.0 and 0.0 <= self.s2 <= 1.0):
            raise ValueError(f"scores out of [0, 1]: {self.s1}, {self.s2}")
        if abs(self.s1 + self.s2 - 1.0) > 1e-9:
            raise ValueError(f"scores do not sum to 1: {self.s1} + {self.s2}")


def removal_probability(scores) -> float:
    """max(0, 2 - exp(|s1 - s2|)), exactly 0 once the gap reaches ln 2."""
    s1, s2 = (scores.s1, scores.s2) if isinstance(scores, ClassScorePair) else scores
    gap = abs(s1 - s2)
    if gap >= LN2:
        return 0.0
    return min(1.0, max(0.0, 2.0 - math.exp(gap)))


class SplitMix64:
    """SplitMix64 generator; ``random()`` uses the top 53 bits."""

    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def random(self) -> float:
        return (self.next_u64() >> 11) / float(1 << 53)


def stable_hash(name: str) -> int:
    return int.from_bytes(hashlib.sha256(name.encode("utf-8")).digest()[:8], "big")


def stream_seed(seed: int, variation: str) -> int:
    return (seed ^ stable_hash(variation)) & _MASK64


class ScoreProvider(Protocol):
    def train(self, pos: np.ndarray, neg: np.ndarray) -> None: ...

    def score(self, X: np.ndarray) -> np.ndarray:
        """Return an (n, 2) array of two-class scores summing to 1 per row."""
        ...


class LogisticScoreProvider:
    """Two-class logistic model trained by full-batch gradient descent.

    Weights start at zero; ``iterations`` steps of size ``step`` on the mean
    log-loss. Scores are (p, 1 - p) with p the positive-class probability.
    """

    def __init__(self, iterations: int = 300, step: float = 0.1):
        self.iterations = iterations
        self.step = step
        self.weights = None
        self.bias = 0.0

    def train(self, pos, neg):
        pos, neg = np.atleast_2d(pos), np.atleast_2d(neg)
        X = np.vstack([pos, neg]).astype(np.float64)
        y = np.concatenate([np.ones(len(pos)), np.zeros(len(neg))])
        w = np.zeros(X.shape[1])
        b = 0.0
        n = len(X)
        for _ in range(self.iterations):
            err = expit(X @ w + b) - y
            w = w - self.step * (X.T @ err) / n
            b = b - self.step * err.sum() / n
        self.weights, self.bias = w, b

    def score(self, X):
        if self.weights is None:
            raise ProviderFailure("score() called before train()")
        p = expit(np.atleast_2d(X) @ self.weights + self.bias)
        return np.column_stack([p, 1.0 - p])


PROVIDERS = {"logistic": LogisticScoreProvider}


def make_provider(name: str, **kwargs):
    try:
        return PROVIDERS[name](**kwargs)
    except KeyError:
        raise ValueError(f"unknown score provider {name!r}; known: {sorted(PROVIDERS)}") from None


@dataclass
class RoundTrace:
    round: int
    input_ids: list
    kept_ids: list
    removed_ids: list
    scores: list
    probabilities: list
    draws: list


@dataclass
class PruneTrace:
    variation: str
    seed: int
    rounds: list = field(default_factory=list)
    stop_reason: str = ""

    def removal_records(self) -> list:
        """One record per removed image: round, id, P_i and the draw u."""
        out = []
        for r in self.rounds:
            removed = set(r.removed_ids)
            for i, p, u in zip(r.input_ids, r.probabilities, r.draws):
                if i in removed:
                    out.append({"variation": self.variation, "round": r.round,
                                "image_id": i, "p": p, "draw": u})
        return out

    def to_jsonl(self) -> str:
        return "".join(json.dumps(rec, sort_keys=True) + "\n" for rec in self.removal_records())

    def to_dict(self):
        return asdict(self)


def _validated_scores(raw, n) -> np.ndarray:
    S = np.asarray(raw, dtype=np.float64)
    if S.shape != (n, 2) or not np.all(np.isfinite(S)):
        raise ProviderFailure(f"provider returned scores of shape {S.shape}, expected {(n, 2)}")
    for s1, s2 in S:
        try:
            ClassScorePair(float(s1), float(s2))
        except ValueError as exc:
            raise ProviderFailure(str(exc)) from None
    return S


def progressive_prune(images, provider, negatives, seed: int, variation: str = "",
                      max_rounds: int = 3, stop_fraction: float = 0.01):
    """Retrain / score / sample until removals fall below ``stop_fraction``.

    Each round the provider is trained on the surviving positives against
    ``negatives``; every survivor then draws ``u`` from one SplitMix64
    stream (in input order) and is removed when ``u < P_i``.
    Returns ``(kept, trace)``; raises EmptySurvivorSet if nothing survives.
    """
    rng = SplitMix64(stream_seed(seed, variation))
    trace = PruneTrace(variation, stream_seed(seed, variation))
    negatives = np.asarray(negatives, dtype=np.float64)
    current = list(images)
    if not current:
        trace.stop_reason = "empty-input"
        raise EmptySurvivorSet(f"{variation}: no images to prune", trace)
    for rnd in range(1, max_rounds + 1):
        X = feature_matrix(current)
        try:
            provider.train(X, negatives)
            S = provider.score(X)
        except ProviderFailure:
            raise
        except Exception as exc:
            raise ProviderFailure(f"{variation}: {exc}") from exc
        S = _validated_scores(S, len(current))
        P = [removal_probability((s1, s2)) for s1, s2 in S]
        draws = [rng.random() for _ in current]
        kept = [rec for rec, p, u in zip(current, P, draws) if not u < p]
        removed = [rec for rec, p, u in zip(current, P, draws) if u < p]
        trace.rounds.append(RoundTrace(
            rnd, [r.image_id for r in current], [r.image_id for r in kept],
            [r.image_id for r in removed], S.tolist(), P, draws))
        if not kept:
            trace.stop_reason = "empty-survivor-set"
            raise EmptySurvivorSet(f"{variation}: every image removed in round {rnd}", trace)
        if len(removed) < stop_fraction * len(current):
            trace.stop_reason = "converged"
            return kept, trace
        current = kept
    trace.stop_reason = "max-rounds"
    return current, trace
