from __future__ import annotations

from typing import Sequence

import numpy as np

from .core import Proposal
from .evaluation import ranked, tiou_matrix


def nms(proposals: Sequence[Proposal], tiou_threshold: float) -> list[Proposal]:
    """Greedy temporal NMS over the proposals of a single video.

    Candidates are visited in rank order (score descending, then earlier
    start, then shorter); one is dropped when its tIoU with any kept proposal
    reaches ``tiou_threshold``.
    """
    order = ranked(proposals)
    if not order:
        return []
    m = tiou_matrix([p.segment for p in order], [p.segment for p in order])
    keep = np.ones(len(order), dtype=bool)
    for i in range(len(order)):
        if keep[i]:
            later = np.arange(i + 1, len(order))
            keep[later[m[i, i + 1:] >= tiou_threshold]] = False
    return [p for p, k in zip(order, keep) if k]
