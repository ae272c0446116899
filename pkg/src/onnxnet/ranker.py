"""Desk-scale trainable text ranker.

A linear model over hashed token n-grams, trained with SGD on the pairwise
hinge objective: within each batch, every ordered pair with distinct
accuracies contributes max(0, margin - (s_better - s_worse)). The learning
rate follows linear warmup into polynomial (linear) decay. Everything is
deterministic for a fixed seed.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator

from .exceptions import MalformedFile, NoComparablePairs
from .validation import check_accuracies, check_texts

_MAGIC = b"ONNXNET-RANKER-1\n"
_TOKEN_RE = re.compile(r"[A-Za-z0-9]+|-->|\(|\)")

DEFAULT_FEATURE_DIM = 1 << 18
DEFAULT_NGRAM_ORDERS = (1, 2)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 5e-5
    epochs: int = 5
    batch_size: int = 16
    margin: float = 1.0
    seed: int = 42
    lr_schedule: str = "polynomial"  # "polynomial" | "constant"
    end_lr: float = 5e-6
    weight_decay: float = 0.1
    warmup_ratio: float = 0.06
    feature_dim: int = DEFAULT_FEATURE_DIM
    ngram_orders: tuple[int, ...] = DEFAULT_NGRAM_ORDERS

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.margin < 0:
            raise ValueError("margin must be non-negative")
        if self.lr_schedule not in ("polynomial", "constant"):
            raise ValueError(f"unknown lr_schedule {self.lr_schedule!r}")


@dataclass
class RankerModel:
    feature_dim: int
    weights: np.ndarray
    hash_seed: int
    ngram_orders: tuple[int, ...]
    version: str = "hinge-ranker-v1"
    train_losses: tuple[float, ...] = ()  # per-epoch means; not persisted

    def __post_init__(self):
        if len(self.weights) != self.feature_dim:
            raise ValueError("weights length must equal feature_dim")


@dataclass(frozen=True)
class FeatureVector:
    indices: np.ndarray  # sorted unique bucket ids
    values: np.ndarray  # matching counts


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text)


def _bucket(ngram: tuple[str, ...], seed: int, dim: int) -> int:
    digest = hashlib.blake2b(
        "\x1f".join(ngram).encode("utf-8"),
        digest_size=8,
        key=seed.to_bytes(8, "little", signed=False),
    ).digest()
    return int.from_bytes(digest, "little") % dim


def featurize(text: str, model_spec: "RankerModel | TrainConfig") -> FeatureVector:
    """Hashed bag of token n-grams; deterministic for (text, spec)."""
    seed = model_spec.hash_seed if isinstance(model_spec, RankerModel) else model_spec.seed
    dim = model_spec.feature_dim
    orders = model_spec.ngram_orders
    tokens = tokenize(text)
    counts: dict[int, float] = {}
    for order in orders:
        for start in range(len(tokens) - order + 1):
            idx = _bucket(tuple(tokens[start : start + order]), seed, dim)
            counts[idx] = counts.get(idx, 0.0) + 1.0
    if not counts:
        return FeatureVector(
            indices=np.empty(0, dtype=np.int64), values=np.empty(0, dtype=np.float64)
        )
    indices = np.fromiter(sorted(counts), dtype=np.int64, count=len(counts))
    values = np.asarray([counts[i] for i in indices], dtype=np.float64)
    return FeatureVector(indices=indices, values=values)


def predict(model: RankerModel, text: str) -> float:
    fv = featurize(text, model)
    return float(model.weights[fv.indices] @ fv.values)


def _lr_at(step: int, total_steps: int, cfg: TrainConfig) -> float:
    warmup = int(cfg.warmup_ratio * total_steps)
    if warmup > 0 and step < warmup:
        return cfg.learning_rate * (step + 1) / warmup
    if cfg.lr_schedule == "constant":
        return cfg.learning_rate
    span = max(1, total_steps - warmup)
    progress = min(1.0, (step - warmup) / span)
    return cfg.end_lr + (cfg.learning_rate - cfg.end_lr) * (1.0 - progress)


def train_ranker(
    train: Sequence[tuple[str, float]], cfg: TrainConfig = TrainConfig()
) -> RankerModel:
    """SGD over within-batch ordered pairs with distinct accuracies.

    Bitwise reproducible for identical data and config.
    """
    if len(train) < 2:
        raise NoComparablePairs("need at least two training items")
    accuracies = np.asarray([a for _, a in train], dtype=np.float64)
    if np.all(accuracies == accuracies[0]):
        raise NoComparablePairs("all training accuracies are equal")

    features = [featurize(text, cfg) for text, _ in train]
    weights = np.zeros(cfg.feature_dim, dtype=np.float64)
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    n = len(train)
    n_batches = (n + cfg.batch_size - 1) // cfg.batch_size
    total_steps = cfg.epochs * n_batches

    step = 0
    epoch_losses: list[float] = []
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        batch_losses: list[float] = []
        for b in range(n_batches):
            batch = order[b * cfg.batch_size : (b + 1) * cfg.batch_size]
            lr = _lr_at(step, total_steps, cfg)
            step += 1

            scores = {
                int(k): float(weights[features[k].indices] @ features[k].values)
                for k in batch
            }
            coeff: dict[int, float] = {}
            losses: list[float] = []
            pairs = 0
            for i in batch:
                for j in batch:
                    if accuracies[i] <= accuracies[j] or i == j:
                        continue
                    pairs += 1
                    gap = cfg.margin - (scores[int(i)] - scores[int(j)])
                    if gap > 0.0:
                        losses.append(gap)
                        coeff[int(i)] = coeff.get(int(i), 0.0) + 1.0
                        coeff[int(j)] = coeff.get(int(j), 0.0) - 1.0
                    else:
                        losses.append(0.0)
            if pairs:
                batch_losses.append(float(np.mean(losses)))
                scale = lr / pairs
                for k, c in coeff.items():
                    if c:
                        fv = features[k]
                        weights[fv.indices] += scale * c * fv.values
            if cfg.weight_decay:
                weights *= 1.0 - lr * cfg.weight_decay
        epoch_losses.append(float(np.mean(batch_losses)) if batch_losses else 0.0)

    return RankerModel(
        feature_dim=cfg.feature_dim,
        weights=weights,
        hash_seed=cfg.seed,
        ngram_orders=tuple(cfg.ngram_orders),
        train_losses=tuple(epoch_losses),
    )


# ---------------------------------------------------------------------------
# model persistence (bitwise round-trip)


def save_model(model: RankerModel, path) -> None:
    header = {
        "version": model.version,
        "feature_dim": model.feature_dim,
        "hash_seed": model.hash_seed,
        "ngram_orders": list(model.ngram_orders),
    }
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        fh.write(np.ascontiguousarray(model.weights, dtype="<f8").tobytes())


def load_model(path) -> RankerModel:
    with open(path, "rb") as fh:
        magic = fh.read(len(_MAGIC))
        if magic != _MAGIC:
            raise MalformedFile(f"{path}: not a ranker model file")
        header_line = bytearray()
        while (ch := fh.read(1)) not in (b"\n", b""):
            header_line += ch
        try:
            header = json.loads(header_line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise MalformedFile(f"{path}: bad model header: {exc}") from exc
        payload = fh.read()
    weights = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    if len(weights) != header.get("feature_dim"):
        raise MalformedFile(
            f"{path}: payload holds {len(weights)} weights, "
            f"header says {header.get('feature_dim')}"
        )
    return RankerModel(
        feature_dim=int(header["feature_dim"]),
        weights=weights,
        hash_seed=int(header["hash_seed"]),
        ngram_orders=tuple(int(v) for v in header["ngram_orders"]),
        version=str(header.get("version", "hinge-ranker-v1")),
    )


# ---------------------------------------------------------------------------
# sklearn front door


class PairwiseRanker(BaseEstimator):
    """Learning-to-rank estimator over encoding texts.

    ``fit`` consumes a list of encoding strings and their accuracies,
    ``predict`` returns scores whose ordering approximates the accuracy
    ordering. Defaults mirror the reference training recipe.

    Examples
    --------
    >>> ranker = PairwiseRanker(epochs=2).fit(texts, accuracies)
    >>> scores = ranker.predict(texts)
    """

    def __init__(
        self,
        learning_rate: float = 5e-5,
        epochs: int = 5,
        batch_size: int = 16,
        margin: float = 1.0,
        seed: int = 42,
        lr_schedule: str = "polynomial",
        end_lr: float = 5e-6,
        weight_decay: float = 0.1,
        warmup_ratio: float = 0.06,
        feature_dim: int = DEFAULT_FEATURE_DIM,
        ngram_orders: tuple[int, ...] = DEFAULT_NGRAM_ORDERS,
    ):
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.margin = margin
        self.seed = seed
        self.lr_schedule = lr_schedule
        self.end_lr = end_lr
        self.weight_decay = weight_decay
        self.warmup_ratio = warmup_ratio
        self.feature_dim = feature_dim
        self.ngram_orders = ngram_orders

    def _config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            batch_size=self.batch_size,
            margin=self.margin,
            seed=self.seed,
            lr_schedule=self.lr_schedule,
            end_lr=self.end_lr,
            weight_decay=self.weight_decay,
            warmup_ratio=self.warmup_ratio,
            feature_dim=self.feature_dim,
            ngram_orders=tuple(self.ngram_orders),
        )

    def fit(self, X, y):
        texts = check_texts(X)
        accuracies = check_accuracies(y, len(texts))
        self.model_ = train_ranker(list(zip(texts, accuracies)), self._config())
        self.n_features_in_ = 1
        return self

    def predict(self, X) -> np.ndarray:
        if not hasattr(self, "model_"):
            raise AttributeError("PairwiseRanker is not fitted yet; call fit first")
        texts = check_texts(X)
        return np.asarray([predict(self.model_, t) for t in texts])

    def score(self, X, y) -> float:
        from .metrics import ScoredSet, kendall_tau

        scores = self.predict(X)
        y = check_accuracies(y, len(scores))
        scored = ScoredSet.from_arrays(range(len(scores)), scores, y)
        return kendall_tau(scored)
