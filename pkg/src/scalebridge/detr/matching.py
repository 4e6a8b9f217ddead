"""Minimum-cost one-to-one matching between queries and ground truths."""
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from ..numerics import kernels


@dataclass
class Assignment:
    pairs: List[Tuple[int, int]]

    def __len__(self):
        return len(self.pairs)

    @property
    def query_indices(self):
        return np.array([q for q, _ in self.pairs], dtype=np.int64)

    @property
    def gt_indices(self):
        return np.array([g for _, g in self.pairs], dtype=np.int64)


def hungarian_match(cost):
    """Assignment of size ``min(queries, ground truths)`` with minimum total cost."""
    cost = np.asarray(cost, dtype=np.float64)
    if cost.size == 0:
        return Assignment([])
    rows, cols = kernels.linear_assignment(cost)
    return Assignment([(int(r), int(c)) for r, c in zip(rows, cols)])
