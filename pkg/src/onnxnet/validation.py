"""Input validation helpers for the estimator-facing API."""

from __future__ import annotations

import numpy as np


def check_texts(X) -> list[str]:
    """Coerce X to a list of strings, rejecting anything else."""
    if isinstance(X, str):
        raise TypeError("expected a sequence of strings, got a single string")
    texts = list(X)
    for i, item in enumerate(texts):
        if not isinstance(item, str):
            raise TypeError(f"item {i} is {type(item).__name__}, expected str")
    return texts


def check_accuracies(y, n: int) -> np.ndarray:
    """1-D finite float targets of length n."""
    arr = np.asarray(y, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"targets must be 1-D, got shape {arr.shape}")
    if len(arr) != n:
        raise ValueError(f"got {len(arr)} targets for {n} samples")
    if not np.all(np.isfinite(arr)):
        raise ValueError("targets contain NaN or infinity")
    return arr
