"""Operator-type histograms and Jensen-Shannon diversity (base 2, in bits).

Within a space: mean pairwise divergence over sampled models. Between two
spaces: divergence of pooled distributions over the joint vocabulary.
Constant nodes never count.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass

from .exceptions import EmptyHistogram, InsufficientSamples
from .graph import GraphIR

_EXCLUDED = frozenset({"Constant"})


@dataclass(frozen=True)
class OpHistogram:
    """Normalized op-type distribution; raw counts kept for pooling."""

    probs: dict[str, float]
    counts: dict[str, int]

    @property
    def vocab(self) -> frozenset[str]:
        return frozenset(self.probs)

    @classmethod
    def from_counts(cls, counts: dict[str, int]) -> "OpHistogram":
        counts = {op: c for op, c in counts.items() if op not in _EXCLUDED and c > 0}
        total = sum(counts.values())
        if total == 0:
            raise EmptyHistogram("no countable (non-Constant) nodes")
        probs = {op: c / total for op, c in sorted(counts.items())}
        return cls(probs=probs, counts=dict(sorted(counts.items())))


def op_histogram(g: GraphIR) -> OpHistogram:
    """Histogram of a raw (pre-simplification) graph's op types."""
    counts: dict[str, int] = {}
    for node in g.nodes.values():
        counts[node.op_type] = counts.get(node.op_type, 0) + 1
    return OpHistogram.from_counts(counts)


def jsd(p: OpHistogram, q: OpHistogram) -> float:
    """Jensen-Shannon divergence in bits; vocabularies are unioned,
    missing keys count as zero and 0*log(0) is zero."""
    vocab = sorted(p.vocab | q.vocab)
    terms = []
    for op in vocab:
        pi = p.probs.get(op, 0.0)
        qi = q.probs.get(op, 0.0)
        m = 0.5 * (pi + qi)
        if pi > 0.0:
            terms.append(0.5 * pi * math.log2(pi / m))
        if qi > 0.0:
            terms.append(0.5 * qi * math.log2(qi / m))
    value = math.fsum(terms)
    return min(1.0, max(0.0, value))


@dataclass(frozen=True)
class DiversityReport:
    space_a: str
    space_b: str | None
    mode: str  # "within" | "between"
    value_bits: float
    sample_count: int
    pair_count: int | None
    seed: int | None = None

    def to_json(self) -> dict:
        return {
            "space_a": self.space_a,
            "space_b": self.space_b,
            "mode": self.mode,
            "value_bits": self.value_bits,
            "n": self.sample_count,
            "pairs": self.pair_count,
            "seed": self.seed,
        }


def _pair_at(index: int, n: int) -> tuple[int, int]:
    # index -> (i, j), i < j, in row-major order over the strict upper triangle
    i = 0
    row = n - 1
    while index >= row:
        index -= row
        i += 1
        row -= 1
    return i, i + 1 + index


def within_space_diversity(
    histograms: list[OpHistogram],
    *,
    space: str = "",
    seed: int | None = None,
    max_pairs: int = 12_500_000,
) -> DiversityReport:
    """Mean pairwise JSD over all unordered pairs (subsampled past max_pairs)."""
    n = len(histograms)
    if n < 2:
        raise InsufficientSamples(f"need at least 2 histograms, got {n}")
    total_pairs = n * (n - 1) // 2
    if total_pairs <= max_pairs:
        values = [
            jsd(histograms[i], histograms[j])
            for i in range(n)
            for j in range(i + 1, n)
        ]
    else:
        rng = random.Random(seed)
        chosen = rng.sample(range(total_pairs), max_pairs)
        values = [jsd(histograms[i], histograms[j]) for i, j in
                  (_pair_at(k, n) for k in chosen)]
    return DiversityReport(
        space_a=space,
        space_b=None,
        mode="within",
        value_bits=math.fsum(values) / len(values),
        sample_count=n,
        pair_count=len(values),
        seed=seed,
    )


def pooled_histogram(histograms: list[OpHistogram], *, by_counts: bool = True) -> OpHistogram:
    """Pool per-model histograms into one distribution.

    Count pooling (default) sums raw occurrence counts before normalizing;
    the alternative averages the per-model distributions.
    """
    if not histograms:
        raise InsufficientSamples("cannot pool an empty histogram list")
    if by_counts:
        if any(not h.counts for h in histograms):
            raise ValueError(
                "count pooling needs raw counts; build histograms via "
                "from_counts or pass by_counts=False"
            )
        counts: dict[str, int] = {}
        for h in histograms:
            for op, c in h.counts.items():
                counts[op] = counts.get(op, 0) + c
        return OpHistogram.from_counts(counts)
    sums: dict[str, float] = {}
    for h in histograms:
        for op, p in h.probs.items():
            sums[op] = sums.get(op, 0.0) + p
    probs = {op: s / len(histograms) for op, s in sorted(sums.items())}
    return OpHistogram(probs=probs, counts={})


def between_space_diversity(
    hists_a: list[OpHistogram],
    hists_b: list[OpHistogram],
    *,
    space_a: str = "",
    space_b: str = "",
    by_counts: bool = True,
    seed: int | None = None,
) -> DiversityReport:
    """JSD between the pooled distributions of two search spaces."""
    if not hists_a or not hists_b:
        raise InsufficientSamples("both spaces need at least one histogram")
    pool_a = pooled_histogram(hists_a, by_counts=by_counts)
    pool_b = pooled_histogram(hists_b, by_counts=by_counts)
    return DiversityReport(
        space_a=space_a,
        space_b=space_b,
        mode="between",
        value_bits=jsd(pool_a, pool_b),
        sample_count=min(len(hists_a), len(hists_b)),
        pair_count=None,
        seed=seed,
    )
