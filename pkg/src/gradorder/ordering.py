"""Epoch visit orders over component indices."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .rng import SplitMix64, derive_seed, fisher_yates


class OrderKind(str, Enum):
    RANDOM = "random"
    DECREASING = "decreasing"
    INCREASING = "increasing"
    INCREMENTAL = "incremental"
    LOGIT_NORM = "logit_norm"


class LogitScore(str, Enum):
    """Scalar sorted by the logit-norm ordering.

    ``loss``: per-sample cross-entropy, worst predicted first (descending).
    ``norm``: Euclidean norm of the logit vector, least confident first (ascending).
    """

    LOSS = "loss"
    NORM = "norm"


@dataclass(frozen=True)
class OrderingStrategy:
    kind: OrderKind
    seed: int = 0
    logit_score: LogitScore = LogitScore.LOSS

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", OrderKind(self.kind))
        object.__setattr__(self, "logit_score", LogitScore(self.logit_score))

    @property
    def needs_keys(self) -> bool:
        return self.kind in (OrderKind.DECREASING, OrderKind.INCREASING, OrderKind.LOGIT_NORM)


def is_permutation(order, n: int) -> bool:
    order = np.asarray(order)
    return order.shape == (n,) and np.array_equal(np.sort(order), np.arange(n))


def make_permutation(
    strategy: OrderingStrategy,
    norms=None,
    epoch: int = 0,
    n: int | None = None,
    substream: int = 0,
) -> np.ndarray:
    """Visit order for one epoch (or one batch, distinguished by ``substream``).

    Sorted orders break ties by ascending original index. ``random`` draws a
    Fisher-Yates shuffle from a SplitMix64 stream keyed on
    ``(seed, epoch, substream)``, so the result never depends on call history.
    """
    if norms is not None:
        norms = np.asarray(norms, dtype=np.float64).reshape(-1)
        if n is None:
            n = norms.shape[0]
    if n is None or n < 1:
        raise ValueError("n must be a positive integer")

    kind = strategy.kind
    if kind is OrderKind.INCREMENTAL:
        return np.arange(n)
    if kind is OrderKind.RANDOM:
        return fisher_yates(n, SplitMix64(derive_seed(strategy.seed, epoch, substream)))

    if norms is None or norms.shape[0] != n:
        got = None if norms is None else norms.shape[0]
        raise ValueError(f"{kind.value} ordering needs {n} keys, got {got}")
    if np.any(np.isnan(norms)):
        raise ValueError("ordering keys contain NaN")

    descending = kind is OrderKind.DECREASING or (
        kind is OrderKind.LOGIT_NORM and strategy.logit_score is LogitScore.LOSS
    )
    # stable sort on the negated key keeps ascending-index tie order
    return np.argsort(-norms if descending else norms, kind="stable")
