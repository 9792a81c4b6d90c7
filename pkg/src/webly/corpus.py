"""N-gram corpus parsing, variation discovery and the offline document-count index.

N-gram files use the 4-field tab-separated layout::

    jumping_VERB horse_NOUN<TAB>1990<TAB>120<TAB>35

Tokens are space separated and carry an optional ``_TAG`` suffix.
"""
from __future__ import annotations

import gzip
import io
import logging
import os
import re
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Iterator, Optional

from .errors import EmptyCorpus, MalformedRecord

logger = logging.getLogger(__name__)

__all__ = [
    "POS",
    "NgramRecord",
    "VariationCandidate",
    "CountIndex",
    "ParseStats",
    "parse_ngram_record",
    "serialize_ngram_record",
    "iter_ngram_records",
    "read_ngram_file",
    "discover_variations",
    "collapse_by_phrase",
    "build_count_index",
    "read_documents",
    "normalize_phrase",
]


class POS(str, Enum):
    NOUN = "NOUN"
    VERB = "VERB"
    ADJ = "ADJ"
    ADV = "ADV"
    OTHER = "OTHER"
    UNTAGGED = "UNTAGGED"


CONTENT_POS = frozenset({POS.NOUN, POS.VERB, POS.ADJ, POS.ADV})

# Finer tag sets collapse onto the four content classes.
_TAG_MAP = {
    "NOUN": POS.NOUN, "PROPN": POS.NOUN, "NN": POS.NOUN, "NNS": POS.NOUN,
    "NNP": POS.NOUN, "NNPS": POS.NOUN,
    "VERB": POS.VERB, "VB": POS.VERB, "VBD": POS.VERB, "VBG": POS.VERB,
    "VBN": POS.VERB, "VBP": POS.VERB, "VBZ": POS.VERB,
    "ADJ": POS.ADJ, "ADJECTIVE": POS.ADJ, "JJ": POS.ADJ, "JJR": POS.ADJ, "JJS": POS.ADJ,
    "ADV": POS.ADV, "ADVERB": POS.ADV, "RB": POS.ADV, "RBR": POS.ADV, "RBS": POS.ADV,
}
_SERIAL_TAG = {POS.NOUN: "NOUN", POS.VERB: "VERB", POS.ADJ: "ADJ", POS.ADV: "ADV", POS.OTHER: "X"}
_TAG_RE = re.compile(r"^(?:[A-Z][A-Z]*|\.)$")


@dataclass(frozen=True)
class NgramRecord:
    tokens: tuple  # of (surface, POS)
    year: int
    match_count: int
    volume_count: int

    @property
    def surfaces(self):
        return tuple(s for s, _ in self.tokens)


@dataclass(frozen=True)
class VariationCandidate:
    phrase: str
    pos_pattern: tuple
    frequency: int
    concept_position: int

    @property
    def tokens(self):
        return tuple(self.phrase.split(" "))


@dataclass
class ParseStats:
    records: int = 0
    malformed: int = 0


def normalize_phrase(text) -> str:
    """Lowercase and single-space join; accepts a string or a token sequence."""
    if isinstance(text, str):
        text = text.split()
    return " ".join(t.lower() for t in text)


def _split_token(tok: str):
    surface, sep, tag = tok.rpartition("_")
    if sep and surface and _TAG_RE.match(tag):
        return surface.lower(), _TAG_MAP.get(tag, POS.OTHER)
    return tok.lower(), POS.UNTAGGED


def parse_ngram_record(line: str) -> NgramRecord:
    line = line.rstrip("\r\n")
    fields = line.split("\t")
    if len(fields) != 4:
        raise MalformedRecord(f"expected 4 tab-separated fields, got {len(fields)}")
    ngram, year, match, volume = fields
    if not ngram:
        raise MalformedRecord("empty n-gram")
    try:
        year, match, volume = int(year), int(match), int(volume)
    except ValueError as exc:
        raise MalformedRecord(f"non-integer count field: {exc}") from None
    if match < 0 or volume < 0:
        raise MalformedRecord("negative count")
    tokens = []
    for tok in ngram.split(" "):
        if not tok:
            raise MalformedRecord("empty token")
        tokens.append(_split_token(tok))
    return NgramRecord(tuple(tokens), year, match, volume)


def serialize_ngram_record(record: NgramRecord) -> str:
    toks = []
    for surface, pos in record.tokens:
        pos = POS(pos)
        toks.append(surface if pos is POS.UNTAGGED else f"{surface}_{_SERIAL_TAG[pos]}")
    return f"{' '.join(toks)}\t{record.year}\t{record.match_count}\t{record.volume_count}"


def iter_ngram_records(lines: Iterable, stats: Optional[ParseStats] = None) -> Iterator[NgramRecord]:
    """Parse lines lazily; malformed lines are skipped and counted in ``stats``."""
    stats = stats if stats is not None else ParseStats()
    for line in lines:
        if isinstance(line, bytes):
            line = line.decode("utf-8", errors="replace")
        if not line.strip():
            continue
        try:
            rec = parse_ngram_record(line)
        except MalformedRecord:
            stats.malformed += 1
            continue
        stats.records += 1
        yield rec


def _open_text(path) -> io.TextIOBase:
    with open(path, "rb") as fh:
        magic = fh.read(2)
    if magic == b"\x1f\x8b":
        return gzip.open(path, "rt", encoding="utf-8", errors="replace")
    return open(path, "r", encoding="utf-8", errors="replace")


def read_ngram_file(path: os.PathLike, stats: Optional[ParseStats] = None) -> list:
    """Read a (possibly gzip-compressed) n-gram file."""
    stats = stats if stats is not None else ParseStats()
    with _open_text(path) as fh:
        records = list(iter_ngram_records(fh, stats))
    if stats.malformed:
        logger.warning("%s: skipped %d malformed records", path, stats.malformed)
    return records


def discover_variations(
    concept: str,
    records: Iterable[NgramRecord],
    allowed_pos=CONTENT_POS,
    max_tokens: int = 3,
) -> list:
    """Collect phrases containing ``concept`` once, with content-word modifiers.

    Frequencies are summed over years per (phrase, POS pattern). The concept
    token's own tag is not filtered. Single-token records (the concept alone)
    are not variations.
    """
    concept = concept.lower()
    allowed = {POS(p) for p in allowed_pos}
    freq = defaultdict(int)
    position = {}
    for rec in records:
        if not 2 <= len(rec.tokens) <= max_tokens:
            continue
        surfaces = rec.surfaces
        if surfaces.count(concept) != 1:
            continue
        at = surfaces.index(concept)
        if any(POS(p) not in allowed for i, (_, p) in enumerate(rec.tokens) if i != at):
            continue
        key = (" ".join(surfaces), tuple(POS(p).value for _, p in rec.tokens))
        freq[key] += rec.match_count
        position[key] = at
    out = [
        VariationCandidate(phrase, pattern, f, position[(phrase, pattern)])
        for (phrase, pattern), f in freq.items()
        if f > 0
    ]
    out.sort(key=lambda c: (-c.frequency, c.phrase, c.pos_pattern))
    return out


def collapse_by_phrase(candidates: Iterable[VariationCandidate]) -> list:
    """Merge candidates sharing a phrase but differing in POS pattern.

    Frequencies are summed; the pattern of the most frequent reading is kept.
    """
    by_phrase = {}
    for c in candidates:
        by_phrase.setdefault(c.phrase, []).append(c)
    out = []
    for phrase, group in by_phrase.items():
        best = min(group, key=lambda c: (-c.frequency, c.pos_pattern))
        out.append(VariationCandidate(phrase, best.pos_pattern,
                                      sum(c.frequency for c in group), best.concept_position))
    out.sort(key=lambda c: (-c.frequency, c.phrase))
    return out


@dataclass
class CountIndex:
    """Document-frequency oracle over token-set documents.

    Postings are stored as integer bitmasks (bit ``i`` set when document
    ``i`` contains the token), so phrase and pair counts are AND + popcount.
    """

    total_docs: int
    postings: dict = field(default_factory=dict)

    def _mask(self, phrase) -> int:
        tokens = normalize_phrase(phrase).split(" ")
        mask = (1 << self.total_docs) - 1
        for tok in tokens:
            mask &= self.postings.get(tok, 0)
            if not mask:
                break
        return mask

    def f(self, x, y=None) -> int:
        """Documents containing every token of ``x`` (and of ``y`` if given)."""
        mask = self._mask(x)
        if y is not None:
            mask &= self._mask(y)
        return mask.bit_count()

    def add_document(self, tokens: Iterable[str]):
        bit = 1 << self.total_docs
        for tok in set(t.lower() for t in tokens):
            self.postings[tok] = self.postings.get(tok, 0) | bit
        self.total_docs += 1


def build_count_index(documents: Iterable[Iterable[str]]) -> CountIndex:
    index = CountIndex(0)
    for doc in documents:
        if isinstance(doc, str):
            doc = doc.split()
        index.add_document(doc)
    if index.total_docs == 0:
        raise EmptyCorpus("document corpus is empty")
    return index


def read_documents(path: os.PathLike) -> list:
    """One document per line, tokens space-separated; blank lines are skipped."""
    with _open_text(path) as fh:
        return [line.split() for line in fh if line.strip()]
