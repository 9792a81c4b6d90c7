"""End-to-end orchestration: variation stage, image stage and the dataset manifest."""
from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import corpus as corpus_mod
from .errors import (DataError, DegenerateTrainingSet, EmptySurvivorSet, InsufficientNegatives,
                     NoSurvivingVariations, SourceUnavailable, UndecodableImage, WeblyError)
from .images import load_image
from .purifier import (background_stats, elda_rank, make_provider, progressive_prune,
                       train_exemplar_ldas)
from .records import feature_matrix
from .semantics import (NgdPurificationReport, build_variation_graph, merge_synonyms,
                        prune_by_center_distance, stage_report)
from .sources import FixtureImageSource, fetch_images, list_image_files
from .tables import render_table
from .vision import (build_visual_graph, extract_hog, filter_salient, make_split,
                     merge_visual_groups, seeded_split, train_linear_classifier,
                     validation_metrics)

logger = logging.getLogger(__name__)

BUNDLED = "bundled"
BUNDLED_NEGATIVES = Path(__file__).parent / "data" / "negatives"


class ConfigError(WeblyError):
    """Invalid configuration (CLI usage error)."""


@dataclass
class PipelineConfig:
    concept: str = ""
    corpus: Optional[str] = None
    docs: Optional[str] = None
    images: Optional[str] = None
    negatives: str = BUNDLED
    labels: Optional[str] = None
    seed: int = 0
    # thresholds
    center_threshold: float = 0.5
    synonym_threshold: float = 0.1
    saliency_threshold: float = 0.7
    visual_slack: float = 0.1
    visual_merge_mode: str = "either"
    # discovery
    allowed_pos: tuple = ("NOUN", "VERB", "ADJ", "ADV")
    max_variation_tokens: int = 3
    # image counts
    images_per_variation: int = 120
    elda_keep: int = 100
    elda_top_k: int = 5
    positives_train: int = 75
    positives_val: int = 25
    negatives_train: int = 25
    negatives_val: int = 25
    saliency_fetch: str = "reuse"
    group_images: str = "representative"
    # classifiers and pruning
    svm_epochs: int = 200
    provider: str = "logistic"
    logistic_iterations: int = 300
    logistic_step: float = 0.1
    prune_max_rounds: int = 3
    prune_stop_fraction: float = 0.01
    workers: int = 1

    def __post_init__(self):
        self.allowed_pos = tuple(self.allowed_pos)

    @property
    def positives(self):
        return self.positives_train + self.positives_val

    @property
    def negatives_pool(self):
        return self.negatives_train + self.negatives_val

    def validate(self):
        for name in ("saliency_threshold", "visual_slack", "prune_stop_fraction"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1]")
        for name in ("center_threshold", "synonym_threshold"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        for name in ("images_per_variation", "elda_keep", "elda_top_k", "positives_train",
                     "positives_val", "negatives_train", "negatives_val", "svm_epochs",
                     "logistic_iterations", "prune_max_rounds", "workers", "max_variation_tokens"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        choices = {"visual_merge_mode": ("either", "both"),
                   "saliency_fetch": ("reuse", "separate"),
                   "group_images": ("representative", "union")}
        for name, allowed in choices.items():
            if getattr(self, name) not in allowed:
                raise ConfigError(f"{name} must be one of {allowed}")
        bad = set(self.allowed_pos) - {"NOUN", "VERB", "ADJ", "ADV"}
        if bad:
            raise ConfigError(f"allowed_pos may only contain NOUN, VERB, ADJ, ADV; got {sorted(bad)}")
        return self

    def to_dict(self):
        d = asdict(self)
        d["allowed_pos"] = list(self.allowed_pos)
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def replace(self, **changes):
        d = self.to_dict()
        d.update(changes)
        return type(self).from_dict(d)


def _map(fn, items, workers: int):
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _float(x):
    return None if x is None else float(x)


# -- stage 1 ----------------------------------------------------------------

@dataclass
class SurvivingVariation:
    name: str
    frequency: int
    center_distance: float
    saliency: float
    visual_aliases: list = field(default_factory=list)
    semantic_aliases: dict = field(default_factory=dict)

    @property
    def members(self):
        """Every phrase this variation stands for."""
        out = [self.name] + list(self.visual_aliases)
        for aliases in self.semantic_aliases.values():
            out.extend(a for a in aliases if a not in out)
        return out


@dataclass
class VariationStageResult:
    concept: str
    seed: int
    config: dict
    variations: list
    removed: list
    report: NgdPurificationReport
    saliency_rows: list = field(default_factory=list)
    visual_scores: dict = field(default_factory=dict)
    visual_edges: list = field(default_factory=list)
    discovered: int = 0

    def to_dict(self):
        return {
            "concept": self.concept,
            "seed": self.seed,
            "config": self.config,
            "discovered": self.discovered,
            "variations": [asdict(v) for v in self.variations],
            "removed": self.removed,
            "report": self.report.to_dict(),
            "saliency_rows": self.saliency_rows,
            "visual_scores": self.visual_scores,
            "visual_edges": self.visual_edges,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["concept"], d["seed"], d["config"],
                   [SurvivingVariation(**v) for v in d["variations"]], d["removed"],
                   NgdPurificationReport.from_dict(d["report"]), d.get("saliency_rows", []),
                   d.get("visual_scores", {}), d.get("visual_edges", []), d.get("discovered", 0))

    def survivors(self) -> list:
        out = []
        for v in self.variations:
            out.extend(v.members)
        return out


def negatives_dir(config: PipelineConfig) -> Path:
    return BUNDLED_NEGATIVES if config.negatives == BUNDLED else Path(config.negatives)


def load_negative_pool(config: PipelineConfig):
    """HOG features of the first ``negatives_pool`` images, split (train, val) by seed."""
    feats = []
    for p in list_image_files(negatives_dir(config))[:config.negatives_pool]:
        try:
            feats.append(extract_hog(load_image(p)))
        except UndecodableImage as exc:
            logger.warning("negative pool: %s", exc)
    if len(feats) < 2:
        raise InsufficientNegatives(f"need at least 2 decodable negatives in {negatives_dir(config)}")
    feats = np.vstack(feats)
    tr, va = seeded_split(len(feats), config.negatives_train, config.negatives_val, config.seed)
    return feats, feats[tr], feats[va]


def attach_features(records):
    """Decode and describe each record; returns (decoded, undecodable)."""
    ok, bad = [], []
    for rec in records:
        try:
            rec.features = extract_hog(load_image(rec.path))
            ok.append(rec)
        except UndecodableImage:
            bad.append(rec)
    return ok, bad


def read_labels(path) -> set:
    with open(path, encoding="utf-8") as fh:
        return {corpus_mod.normalize_phrase(line) for line in fh if line.strip()}


def _source(config, source):
    if source is not None:
        return source
    if not config.images:
        raise DataError("no image source configured (--images)")
    return FixtureImageSource(config.images)


def run_variation_stage(config: PipelineConfig, source=None) -> VariationStageResult:
    """Discover, prune, merge synonyms, gate on saliency and merge visually."""
    config.validate()
    source = _source(config, source)
    labels = read_labels(config.labels) if config.labels else None
    concept = corpus_mod.normalize_phrase(config.concept)
    records = corpus_mod.read_ngram_file(config.corpus)
    found = corpus_mod.discover_variations(concept, records, config.allowed_pos,
                                           config.max_variation_tokens)
    candidates = corpus_mod.collapse_by_phrase(found)
    if not candidates:
        raise NoSurvivingVariations(f"no variations of {concept!r} in {config.corpus}", "discover")
    counts = corpus_mod.build_count_index(corpus_mod.read_documents(config.docs))
    removed = []
    report = NgdPurificationReport(concept)
    all_phrases = [c.phrase for c in candidates]

    graph = build_variation_graph(concept, candidates, counts)
    pruned = prune_by_center_distance(graph, config.center_threshold)
    for r in pruned.removed:
        removed.append({"phrase": r.phrase, "stage": "center-distance", "reason": r.reason,
                        "value": _float(r.value)})
    report.stages.append(stage_report("center-distance", all_phrases, pruned.phrases, labels))
    if not pruned.nodes:
        raise NoSurvivingVariations("every variation removed by center distance", "center-distance")

    merged = merge_synonyms(pruned, config.synonym_threshold)
    syn_groups = merged.synonym_groups()
    report.stages.append(stage_report("synonym-merge", pruned.phrases, pruned.phrases, labels,
                                      n_kept=len(syn_groups)))

    freq = {n.phrase: n.frequency for n in merged.nodes}
    reps = list(syn_groups)
    neg_all, neg_train, neg_val = load_negative_pool(config)

    def saliency(item):
        index, rep = item
        k = config.images_per_variation if config.saliency_fetch == "reuse" else config.positives
        try:
            recs = fetch_images(source, rep, k)[:config.positives]
        except SourceUnavailable as exc:
            return rep, None, None, f"source-unavailable: {exc}"
        recs, _ = attach_features(recs)
        try:
            split = make_split(feature_matrix(recs), neg_train, neg_val, seed=config.seed + index,
                               n_train=config.positives_train, n_val=config.positives_val,
                               ids=[r.image_id for r in recs])
        except DegenerateTrainingSet as exc:
            return rep, None, None, f"too-few-images: {exc}"
        clf = train_linear_classifier(split.pos_train, split.neg_train, epochs=config.svm_epochs)
        return rep, clf, split, None

    results = _map(saliency, list(enumerate(reps)), config.workers)
    classifiers, splits, scores = {}, {}, {}
    saliency_rows = []
    unavailable = []
    for rep, clf, split, problem in results:
        if problem is not None:
            unavailable.append(rep)
            removed.append({"phrase": rep, "stage": "saliency", "reason": problem.split(":")[0],
                            "value": None})
            continue
        classifiers[rep], splits[rep] = clf, split
        acc, prec, rec = validation_metrics(clf, split)
        scores[rep] = acc
        saliency_rows.append([concept, rep, acc, prec, rec])

    scored = [r for r in reps if r in scores]
    kept, dropped = filter_salient(scored, scores, config.saliency_threshold)
    for rep, reason, s in dropped:
        removed.append({"phrase": rep, "stage": "saliency", "reason": reason, "value": s})
    before = [m for r in reps for m in syn_groups[r]]
    after = [m for r in kept for m in syn_groups[r]]
    report.stages.append(stage_report("saliency", before, after, labels,
                                      n_input=len(reps), n_kept=len(kept)))
    if not kept:
        raise NoSurvivingVariations("every variation failed the saliency gate", "saliency")

    vgraph = build_visual_graph(kept, classifiers, splits, {r: freq[r] for r in kept})
    vgraph = merge_visual_groups(vgraph, config.visual_slack, config.visual_merge_mode)
    vgroups = vgraph.visual_groups()
    report.stages.append(stage_report("visual-merge", after, after, labels,
                                      n_input=len(kept), n_kept=len(vgroups)))

    variations = []
    for rep, members in vgroups.items():
        variations.append(SurvivingVariation(
            rep, freq[rep], float(merged.center_distance[rep]), scores[rep],
            [m for m in members if m != rep],
            {m: [a for a in syn_groups[m] if a != m] for m in members}))
    return VariationStageResult(
        concept, config.seed, config.to_dict(), variations, removed, report, saliency_rows,
        {r: vgraph.V[r] for r in kept},
        [[i, j, vgraph.E[(i, j)]] for i in kept for j in kept],
        discovered=len(candidates))


# -- stage 2 ----------------------------------------------------------------

@dataclass
class ManifestVariation:
    name: str
    status: str
    fetched: int
    kept: list = field(default_factory=list)
    removed: list = field(default_factory=list)
    visual_aliases: list = field(default_factory=list)
    semantic_aliases: dict = field(default_factory=dict)
    stop_reason: str = ""
    note: str = ""


@dataclass
class DatasetManifest:
    concept: str
    seed: int
    config: dict
    variations: list
    images: dict = field(default_factory=dict)

    def to_dict(self):
        return {"concept": self.concept, "seed": self.seed, "config": self.config,
                "variations": [asdict(v) for v in self.variations], "images": self.images}

    @classmethod
    def from_dict(cls, d):
        return cls(d["concept"], d["seed"], d["config"],
                   [ManifestVariation(**v) for v in d["variations"]], d["images"])

    def to_json(self) -> str:
        return dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str):
        return cls.from_dict(json.loads(text))

    def training_set(self) -> list:
        """Unique content hashes of every kept image, in manifest order."""
        seen = []
        for v in self.variations:
            for k in v.kept:
                if k["hash"] not in seen:
                    seen.append(k["hash"])
        return seen


def audit_manifest(manifest: DatasetManifest) -> list:
    """Conservation violations (kept + removed != fetched); empty when sound."""
    problems = []
    for v in manifest.variations:
        if len(v.kept) + len(v.removed) != v.fetched:
            problems.append(f"{v.name}: kept {len(v.kept)} + removed {len(v.removed)} != fetched {v.fetched}")
        ids = [e["image_id"] for e in v.kept] + [e["image_id"] for e in v.removed]
        if len(ids) != len(set(ids)):
            problems.append(f"{v.name}: an image appears more than once")
    return problems


def _entry(rec, **extra):
    d = {"image_id": rec.image_id, "hash": rec.content_hash, "source_rank": rec.source_rank}
    d.update(extra)
    return d


@dataclass
class ImageStageOutput:
    manifest: DatasetManifest
    traces: list


def _purify_variation(config, source, variation: SurvivingVariation, neg_all, stats):
    queries = [variation.name]
    if config.group_images == "union":
        queries += list(variation.visual_aliases)
    mv = ManifestVariation(variation.name, "ok", 0, visual_aliases=list(variation.visual_aliases),
                           semantic_aliases=dict(variation.semantic_aliases))
    fetched, notes = [], []
    for q in queries:
        try:
            fetched.extend(fetch_images(source, q, config.images_per_variation))
        except SourceUnavailable as exc:
            notes.append(str(exc))
    mv.fetched = len(fetched)
    if not fetched:
        mv.status = "source-unavailable" if notes else "empty-survivor-set"
        mv.note = "; ".join(notes)
        return mv, None, {}

    seen, unique = set(), []
    for rec in fetched:
        if rec.content_hash in seen:
            mv.removed.append(_entry(rec, stage="fetch", reason="duplicate"))
        else:
            seen.add(rec.content_hash)
            unique.append(rec)
    decoded, bad = attach_features(unique)
    for rec in bad:
        mv.removed.append(_entry(rec, stage="fetch", reason="undecodable"))
    paths = {rec.content_hash: rec.path for rec in decoded}

    detectors = train_exemplar_ldas(feature_matrix(decoded), stats, [r.image_id for r in decoded]) \
        if decoded else []
    order, escores = elda_rank(decoded, detectors, config.elda_top_k)
    elda_info = {decoded[j].image_id: (pos + 1, float(escores[j])) for pos, j in enumerate(order)}
    selected = [decoded[j] for j in order[:config.elda_keep]]
    for j in order[config.elda_keep:]:
        rec = decoded[j]
        rank, score = elda_info[rec.image_id]
        mv.removed.append(_entry(rec, stage="elda", reason="below-top-k", elda_rank=rank,
                                 elda_score=score))
    if not selected:
        mv.status = "empty-survivor-set"
        return mv, None, paths

    provider = make_provider(config.provider, iterations=config.logistic_iterations,
                             step=config.logistic_step)
    try:
        kept, trace = progressive_prune(selected, provider, neg_all, config.seed, variation.name,
                                        config.prune_max_rounds, config.prune_stop_fraction)
    except EmptySurvivorSet as exc:
        kept, trace = [], exc.trace
        mv.status = "empty-survivor-set"
    mv.stop_reason = trace.stop_reason
    by_id = {r.image_id: r for r in selected}
    for rnd in trace.rounds:
        removed = set(rnd.removed_ids)
        for i, p, u in zip(rnd.input_ids, rnd.probabilities, rnd.draws):
            if i in removed:
                rec = by_id[i]
                rank, score = elda_info[i]
                mv.removed.append(_entry(rec, stage="prune", reason="ambiguous-scores", round=rnd.round,
                                         p=p, draw=u, elda_rank=rank, elda_score=score))
    for rec in kept:
        rank, score = elda_info[rec.image_id]
        mv.kept.append(_entry(rec, elda_rank=rank, elda_score=score,
                              rounds_survived=len(trace.rounds)))
    mv.removed.sort(key=lambda e: (e["image_id"].rsplit("#", 1)[0], e["source_rank"]))
    return mv, trace, paths


def run_image_stage(config: PipelineConfig, stage1: VariationStageResult, source=None) -> ImageStageOutput:
    """Fetch, exemplar-LDA select and progressively prune each surviving variation."""
    config.validate()
    source = _source(config, source)
    if not stage1.variations:
        raise NoSurvivingVariations("variation stage produced nothing", "image-stage")
    neg_all, _, _ = load_negative_pool(config)
    stats = background_stats(neg_all)
    stats.factor  # factorise once before any worker threads start
    variations = sorted(stage1.variations, key=lambda v: v.name)
    results = _map(lambda v: _purify_variation(config, source, v, neg_all, stats), variations,
                   config.workers)
    manifest = DatasetManifest(stage1.concept, config.seed, config.to_dict(), [])
    traces = []
    for mv, trace, paths in results:
        manifest.variations.append(mv)
        if trace is not None:
            traces.append(trace)
        for h, p in paths.items():
            manifest.images.setdefault(h, p)
    manifest.images = dict(sorted(manifest.images.items()))
    problems = audit_manifest(manifest)
    if problems:
        raise AssertionError("; ".join(problems))
    return ImageStageOutput(manifest, traces)


def run_pipeline(config: PipelineConfig, source=None):
    """Both stages; stage 2 consumes the serialised stage-1 result."""
    stage1 = run_variation_stage(config, source)
    stage1 = VariationStageResult.from_dict(json.loads(dumps(stage1.to_dict())))
    return stage1, run_image_stage(config, stage1, source)


# -- persistence and reports ------------------------------------------------

def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def write_stage1(out: os.PathLike, result: VariationStageResult) -> Path:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "variations.json"
    path.write_text(dumps(result.to_dict()), encoding="utf-8")
    (out / "variation_report.txt").write_text(render_stage1_report(result) + "\n", encoding="utf-8")
    return path


def read_stage1(path: os.PathLike) -> VariationStageResult:
    with open(path, encoding="utf-8") as fh:
        return VariationStageResult.from_dict(json.load(fh))


def write_stage2(out: os.PathLike, output: ImageStageOutput) -> Path:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "manifest.json"
    path.write_text(output.manifest.to_json(), encoding="utf-8")
    (out / "prune_trace.jsonl").write_text("".join(t.to_jsonl() for t in output.traces),
                                           encoding="utf-8")
    (out / "image_report.txt").write_text(render_manifest_summary(output.manifest) + "\n",
                                          encoding="utf-8")
    return path


def read_manifest(path: os.PathLike) -> DatasetManifest:
    with open(path, encoding="utf-8") as fh:
        return DatasetManifest.from_json(fh.read())


def render_stage1_report(result: VariationStageResult) -> str:
    from .vision import saliency_table
    parts = ["Word-variation purification (center distance)",
             result.report.table("center-distance"), ""]
    stages = [["Stage", "input", "kept", "removed"]]
    for s in result.report.stages:
        stages.append([s.stage, s.input, s.kept, s.removed])
    parts += ["Per-stage counts", render_table(stages), ""]
    if result.saliency_rows:
        parts += ["Visual saliency", saliency_table(result.saliency_rows), ""]
    parts += ["Word variations found", variation_count_table({result.concept: len(result.survivors())})]
    return "\n".join(parts)


def variation_count_table(counts: dict) -> str:
    names = list(counts)
    return render_table([["concept:"] + names, ["vars:"] + [counts[n] for n in names]])


def render_manifest_summary(manifest: DatasetManifest) -> str:
    rows = [["Variation", "status", "fetched", "kept", "removed", "stop"]]
    for v in manifest.variations:
        rows.append([v.name, v.status, v.fetched, len(v.kept), len(v.removed), v.stop_reason or "-"])
    return f"Image purification for {manifest.concept!r} (seed {manifest.seed})\n" + render_table(rows)
