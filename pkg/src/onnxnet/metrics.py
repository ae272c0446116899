"""Rank-correlation metrics and the pairwise hinge loss."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .exceptions import DegenerateInput


@dataclass(frozen=True)
class ScoredSet:
    """(id, predicted score, true accuracy) triples for one evaluation."""

    entries: tuple[tuple[str, float, float], ...]

    def __post_init__(self):
        if len(self.entries) < 2:
            raise DegenerateInput("need at least 2 scored entries")
        ids = [e[0] for e in self.entries]
        if len(set(ids)) != len(ids):
            raise DegenerateInput("duplicate ids in scored set")

    @classmethod
    def from_arrays(cls, ids, scores, accuracies) -> "ScoredSet":
        return cls(
            tuple(
                (str(i), float(s), float(a))
                for i, s, a in zip(ids, scores, accuracies, strict=True)
            )
        )

    @property
    def scores(self) -> np.ndarray:
        return np.asarray([e[1] for e in self.entries], dtype=np.float64)

    @property
    def accuracies(self) -> np.ndarray:
        return np.asarray([e[2] for e in self.entries], dtype=np.float64)


def kendall_tau(s: ScoredSet) -> float:
    """Tie-corrected tau-b between predicted scores and true accuracies.

    Raises DegenerateInput where the statistic is undefined (a constant
    side), rather than reporting a misleading 0.
    """
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # constant input becomes our error below
        value = float(stats.kendalltau(s.scores, s.accuracies, variant="b")[0])
    if math.isnan(value):
        raise DegenerateInput("kendall tau undefined: a side is constant")
    return value


def spearman_rho(s: ScoredSet) -> float:
    """Pearson correlation of mid-ranks (ties get average ranks)."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        value = float(stats.spearmanr(s.scores, s.accuracies)[0])
    if math.isnan(value):
        raise DegenerateInput("spearman rho undefined: a side is constant")
    return value


def hinge_loss(s_i: float, s_j: float, better_is_i: bool, margin: float = 1.0) -> float:
    """max(0, margin - d) where d is the score gap in the correct direction."""
    if margin < 0:
        raise ValueError("margin must be non-negative")
    d = s_i - s_j if better_is_i else s_j - s_i
    return max(0.0, margin - d)
