"""Image acquisition: local fixture directories and a polite HTTP fetcher."""
from __future__ import annotations

import hashlib
import json
import logging
import os
import time
import urllib.parse
import urllib.request
from pathlib import Path
from typing import Callable, Optional, Protocol

from .errors import SourceUnavailable
from .images import IMAGE_SUFFIXES, file_hash
from .records import ImageRecord

logger = logging.getLogger(__name__)

DELAY_ENV = "WEBLY_HTTP_DELAY"


class ImageSource(Protocol):
    def list(self, query: str, k: int) -> list:
        """Up to ``k`` local image paths for ``query``, best-ranked first."""
        ...


def query_dirname(query: str) -> str:
    return "_".join(query.split())


def list_image_files(directory: os.PathLike) -> list:
    directory = Path(directory)
    if not directory.is_dir():
        raise SourceUnavailable(f"image directory not found: {directory}")
    return sorted(p for p in directory.iterdir()
                  if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)


class FixtureImageSource:
    """``root/<query with spaces as underscores>/``; rank = lexicographic filename order."""

    def __init__(self, root: os.PathLike):
        self.root = Path(root)

    def list(self, query: str, k: int) -> list:
        return [str(p) for p in list_image_files(self.root / query_dirname(query))[:k]]


class HttpImageSource:
    """Fetch images for a query from a JSON search endpoint.

    ``search_url`` is a template with ``{query}`` and ``{k}`` placeholders
    returning a JSON list of image URLs. Downloads go to ``cache_dir`` and
    are named by URL hash. Every request waits ``delay`` seconds first
    (``WEBLY_HTTP_DELAY`` overrides) and is retried up to ``retries`` times.
    """

    def __init__(self, search_url: str, cache_dir: os.PathLike, delay: Optional[float] = None,
                 retries: int = 3, timeout: float = 30.0,
                 opener: Optional[Callable[[str, float], bytes]] = None,
                 sleep: Callable[[float], None] = time.sleep):
        self.search_url = search_url
        self.cache_dir = Path(cache_dir)
        if delay is None:
            delay = float(os.environ.get(DELAY_ENV, "1.0"))
        self.delay = delay
        self.retries = retries
        self.timeout = timeout
        self.opener = opener or _urlopen
        self.sleep = sleep

    def _get(self, url: str) -> bytes:
        last = None
        for attempt in range(1 + self.retries):
            self.sleep(self.delay)
            try:
                return self.opener(url, self.timeout)
            except OSError as exc:
                last = exc
                logger.info("GET %s failed (attempt %d): %s", url, attempt + 1, exc)
        raise SourceUnavailable(f"{url}: {last}")

    def list(self, query: str, k: int) -> list:
        url = self.search_url.format(query=urllib.parse.quote(query), k=k)
        try:
            urls = json.loads(self._get(url).decode("utf-8"))
        except ValueError as exc:
            raise SourceUnavailable(f"{url}: bad search response: {exc}") from None
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        paths = []
        for u in urls[:k]:
            name = hashlib.sha256(u.encode("utf-8")).hexdigest()[:32]
            suffix = Path(urllib.parse.urlparse(u).path).suffix.lower()
            path = self.cache_dir / (name + (suffix if suffix in IMAGE_SUFFIXES else ".img"))
            if not path.exists():
                try:
                    path.write_bytes(self._get(u))
                except SourceUnavailable as exc:
                    logger.warning("skipping image: %s", exc)
                    continue
            paths.append(str(path))
        return paths


def _urlopen(url: str, timeout: float) -> bytes:
    req = urllib.request.Request(url, headers={"User-Agent": "webly/0.1"})
    with urllib.request.urlopen(req, timeout=timeout) as resp:
        return resp.read()


def fetch_images(source: ImageSource, query: str, k: int) -> list:
    """ImageRecords for the top ``k`` results, ranks starting at 1."""
    if k <= 0:
        raise ValueError("k must be positive")
    paths = source.list(query, k)[:k]
    return [ImageRecord(f"{query}#{rank}", query, rank, str(p), file_hash(p))
            for rank, p in enumerate(paths, start=1)]
