from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np


@dataclass
class ImageRecord:
    """One fetched image for one variation.

    ``image_id`` is unique within a fetch (``<variation>#<rank>``);
    ``content_hash`` identifies the bytes and is shared by duplicates.
    """

    image_id: str
    variation: str
    source_rank: int
    path: str = ""
    content_hash: str = ""
    features: Optional[np.ndarray] = field(default=None, repr=False, compare=False)
    scores: dict = field(default_factory=dict)


def feature_matrix(records) -> np.ndarray:
    return np.vstack([r.features for r in records]) if records else np.empty((0, 0))
