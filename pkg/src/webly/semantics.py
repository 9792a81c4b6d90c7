"""Normalized Google distance and text-stage purification of word variations."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Optional

from .corpus import CountIndex, VariationCandidate, normalize_phrase
from .errors import UndefinedDistance
from .tables import render_table
from .unionfind import UnionFind, canonical_groups

INF = math.inf

REASON_UNDEFINED = "undefined-distance"
REASON_CENTER = "center-distance"


def ngd(x, y, counts: CountIndex, log: Callable[[float], float] = math.log) -> float:
    """Normalized Google distance between two terms.

    Raises UndefinedDistance when either term is unseen. Zero co-occurrence,
    and the degenerate case where a term occurs in every document, give +inf.
    """
    fx, fy = counts.f(x), counts.f(y)
    if fx == 0 or fy == 0:
        raise UndefinedDistance(f"unseen term: {x if fx == 0 else y!r}")
    fxy = counts.f(x, y)
    if fxy == 0:
        return INF
    lx, ly = log(fx), log(fy)
    denom = log(counts.total_docs) - min(lx, ly)
    if denom <= 0:
        return INF
    return max(0.0, (max(lx, ly) - log(fxy)) / denom)


def symmetric_distance(x, y, counts: CountIndex, log=math.log) -> float:
    """Average of both NGD orientations."""
    return (ngd(x, y, counts, log) + ngd(y, x, counts, log)) / 2


def _pair(a: str, b: str):
    return (a, b) if a <= b else (b, a)


@dataclass(frozen=True)
class Removal:
    phrase: str
    reason: str
    value: Optional[float] = None


@dataclass
class VariationGraph:
    """Variations around a concept, with distances and synonym groups.

    ``center_distance`` maps phrase to d_x, or None when undefined.
    ``pair_distance`` is keyed by lexicographically ordered phrase pairs.
    """

    concept: str
    nodes: list
    center_distance: dict
    counts: Optional[CountIndex] = field(default=None, repr=False, compare=False)
    pair_distance: dict = field(default_factory=dict)
    groups: UnionFind = field(default_factory=UnionFind)
    removed: list = field(default_factory=list)

    def __post_init__(self):
        for node in self.nodes:
            self.groups.add(node.phrase)

    @property
    def phrases(self):
        return [n.phrase for n in self.nodes]

    def node(self, phrase) -> VariationCandidate:
        for n in self.nodes:
            if n.phrase == phrase:
                return n
        raise KeyError(phrase)

    def distance(self, a, b) -> float:
        return self.pair_distance[_pair(a, b)]

    def synonym_groups(self) -> dict:
        """Representative phrase -> member phrases (representative first)."""
        freq = {n.phrase: n.frequency for n in self.nodes}
        return canonical_groups(self.groups, key=lambda p: (-freq[p], p))

    def representatives(self) -> list:
        return list(self.synonym_groups())


def build_variation_graph(concept: str, candidates: Iterable[VariationCandidate],
                          counts: CountIndex) -> VariationGraph:
    concept = normalize_phrase(concept)
    nodes = list(candidates)
    center = {}
    for node in nodes:
        try:
            center[node.phrase] = ngd(node.phrase, concept, counts)
        except UndefinedDistance:
            center[node.phrase] = None
    return VariationGraph(concept, nodes, center, counts=counts)


def prune_by_center_distance(graph: VariationGraph, threshold: float = 0.5) -> VariationGraph:
    """Drop variations whose distance to the concept is >= threshold or undefined."""
    kept, removed = [], list(graph.removed)
    for node in graph.nodes:
        d = graph.center_distance.get(node.phrase)
        if d is None:
            removed.append(Removal(node.phrase, REASON_UNDEFINED))
        elif d >= threshold:
            removed.append(Removal(node.phrase, REASON_CENTER, d))
        else:
            kept.append(node)
    keep = {n.phrase for n in kept}
    groups = UnionFind()
    for p in graph.groups.parent:
        if p in keep:
            groups.add(p)
    for p in keep:
        root = graph.groups.find(p)
        if root in keep:
            groups.union(p, root)
    pairs = {k: v for k, v in graph.pair_distance.items() if k[0] in keep and k[1] in keep}
    return replace(graph, nodes=kept, pair_distance=pairs, groups=groups, removed=removed)


def compute_pair_distances(graph: VariationGraph) -> dict:
    out = dict(graph.pair_distance)
    if graph.counts is None:
        return out
    for a, b in itertools.combinations(sorted(graph.phrases), 2):
        if (a, b) not in out:
            try:
                out[(a, b)] = symmetric_distance(a, b, graph.counts)
            except UndefinedDistance:
                out[(a, b)] = INF
    return out


def merge_synonyms(graph: VariationGraph, threshold: float = 0.1) -> VariationGraph:
    """Union every pair with d_xy <= threshold; groups are transitively closed."""
    pairs = compute_pair_distances(graph)
    groups = graph.groups.copy()
    for (a, b), d in sorted(pairs.items()):
        if d <= threshold:
            groups.union(a, b)
    return replace(graph, pair_distance=pairs, groups=groups, removed=list(graph.removed))


@dataclass
class StageReport:
    stage: str
    input: int
    kept: int
    removed: int
    correct_before: Optional[int] = None
    noisy_before: Optional[int] = None
    correct_after: Optional[int] = None
    noisy_after: Optional[int] = None
    false_pos: Optional[int] = None

    def __post_init__(self):
        if self.kept + self.removed != self.input:
            raise ValueError(f"{self.stage}: kept + removed != input")

    @property
    def precision_before(self):
        return _precision(self.correct_before, self.noisy_before)

    @property
    def precision_after(self):
        return _precision(self.correct_after, self.noisy_after)


def _precision(correct, noisy):
    if correct is None or correct + noisy == 0:
        return None
    return correct / (correct + noisy)


def stage_report(stage: str, before: Iterable[str], after: Iterable[str],
                 labels: Optional[set] = None, n_input: Optional[int] = None,
                 n_kept: Optional[int] = None) -> StageReport:
    """Counts for one purification step.

    ``before``/``after`` are the surviving phrases (aliases included) and feed
    the labelled columns. ``n_input``/``n_kept`` override the unit counts for
    steps that act on groups rather than phrases.
    """
    before, after = list(before), set(after)
    n_input = len(before) if n_input is None else n_input
    n_kept = len(after) if n_kept is None else n_kept
    rep = StageReport(stage, n_input, n_kept, n_input - n_kept)
    if labels is not None:
        rep.correct_before = sum(p in labels for p in before)
        rep.noisy_before = len(before) - rep.correct_before
        rep.correct_after = sum(p in labels for p in after)
        rep.noisy_after = len(after) - rep.correct_after
        rep.false_pos = rep.correct_before - rep.correct_after
    return rep


@dataclass
class NgdPurificationReport:
    concept: str
    stages: list = field(default_factory=list)

    def stage(self, name) -> StageReport:
        for s in self.stages:
            if s.stage == name:
                return s
        raise KeyError(name)

    def to_dict(self):
        return {"concept": self.concept,
                "stages": [dict(vars(s)) for s in self.stages]}

    @classmethod
    def from_dict(cls, d):
        return cls(d["concept"], [StageReport(**s) for s in d["stages"]])

    def table(self, stage: str = REASON_CENTER) -> str:
        """Render one stage as a found-vs-filtered table."""
        s = self.stage(stage)
        head = ["Concept", "correct", "noisy", "precision", "correct", "noisy", "precision", "false pos"]
        if s.correct_before is None:
            head = ["Concept", "found", "kept", "removed"]
            row = [self.concept, str(s.input), str(s.kept), str(s.removed)]
        else:
            row = [self.concept, str(s.correct_before), str(s.noisy_before), _pct(s.precision_before),
                   str(s.correct_after), str(s.noisy_after), _pct(s.precision_after), str(s.false_pos)]
        return render_table([head, row])


def _pct(x):
    return "-" if x is None else f"{100 * x:.1f}%"

