"""Stratified k-fold assignment."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import StratificationError


@dataclass(frozen=True)
class FoldPlan:
    k: int
    assignments: np.ndarray
    seed: int

    def test_index(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == fold)

    def train_index(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments != fold)

    def splits(self):
        """Yield ``(train_idx, test_idx)`` for every fold in order."""
        for f in range(self.k):
            yield self.train_index(f), self.test_index(f)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignments, minlength=self.k)


def stratified_kfold(y, k: int = 10, seed: int = 42) -> FoldPlan:
    """Assign rows to ``k`` folds keeping class proportions.

    Each class is shuffled with ``seed`` and dealt round-robin; the second
    class continues the rotation where the first stopped, so overall fold
    sizes differ by at most one.
    """
    y = np.asarray(y)
    if k < 2:
        raise StratificationError(f"k must be >= 2, got {k}")
    if not np.isin(y, (0, 1)).all():
        raise StratificationError("labels must be 0/1")
    rng = np.random.default_rng(seed)
    assignments = np.empty(y.shape[0], dtype=np.int64)
    offset = 0
    for cls in (0, 1):
        idx = np.flatnonzero(y == cls)
        if idx.size < k:
            raise StratificationError(
                f"class {cls} has {idx.size} rows, fewer than k={k} folds")
        idx = rng.permutation(idx)
        assignments[idx] = (offset + np.arange(idx.size)) % k
        offset += idx.size
    return FoldPlan(k=k, assignments=assignments, seed=seed)
