"""Shuffling SGD trainers: full-data ordering, data selection, and two mini-batch variants.

All trainers share one loop structure: a global update counter ``t`` drives
the step schedule, and each parameter update emits one :class:`TraceRecord`
carrying the full objective at the new iterate.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .core import StepSchedule, as_params
from .losses import FiniteSumLoss
from .ordering import OrderKind, OrderingStrategy, make_permutation


class Algorithm(str, Enum):
    FULL_ORDERING = "full_ordering"
    DATA_SELECTION = "data_selection"
    SORT_BEFORE_MINIBATCH = "sort_before_minibatch"
    SORT_WITHIN_MINIBATCH = "sort_within_minibatch"


class DivergenceError(FloatingPointError):
    def __init__(self, epoch: int, iteration: int):
        super().__init__(
            f"non-finite iterate at epoch {epoch}, iteration {iteration}; step size too large?"
        )
        self.epoch = epoch
        self.iteration = iteration
        #: trace up to the last finite iterate, filled in by :func:`train`
        self.records: list = []


@dataclass(frozen=True)
class TrainConfig:
    """One training run.

    ``epochs`` counts every epoch including the ``warm_start_epochs`` leading
    ones, which run ``warm_start_strategy`` (random reshuffling by default)
    over the full data before ``strategy`` takes over. Without
    ``warm_start_schedule`` the main schedule runs on through the warm start;
    with it, warm epochs use that schedule and the main schedule's update and
    epoch counters restart at zero when the warm start ends.
    """

    algorithm: Algorithm
    strategy: OrderingStrategy
    schedule: StepSchedule
    epochs: int
    batch_size: int | None = None
    select_count: int | None = None
    warm_start_epochs: int = 0
    warm_start_strategy: OrderingStrategy | None = None
    warm_start_schedule: StepSchedule | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "algorithm", Algorithm(self.algorithm))
        if self.epochs < 0 or self.warm_start_epochs < 0:
            raise ValueError("epoch counts must be non-negative")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.select_count is not None:
            if self.select_count < 1:
                raise ValueError("select_count must be positive")
            if self.batch_size is not None and self.select_count > self.batch_size:
                raise ValueError(f"select_count {self.select_count} exceeds batch_size {self.batch_size}")
        if self.algorithm is not Algorithm.FULL_ORDERING and self.batch_size is None:
            raise ValueError(f"{self.algorithm.value} requires batch_size")
        if self.algorithm in (Algorithm.DATA_SELECTION, Algorithm.SORT_WITHIN_MINIBATCH) and self.select_count is None:
            object.__setattr__(self, "select_count", self.batch_size)

    @property
    def warm_strategy(self) -> OrderingStrategy:
        if self.warm_start_strategy is not None:
            return self.warm_start_strategy
        return OrderingStrategy(OrderKind.RANDOM, seed=self.strategy.seed)


@dataclass(frozen=True)
class TraceRecord:
    epoch: int
    iteration: int
    loss: float
    dist_sq: float | None
    step_size: float
    #: sort keys snapshotted for this epoch, set on the epoch's first record only
    epoch_start_norms: tuple[float, ...] | None
    #: components whose gradients formed this update
    indices: tuple[int, ...]
    #: norm of the applied (mean) gradient, evaluated before the update
    grad_norm: float


@dataclass
class TrainResult:
    records: list[TraceRecord]
    x_final: np.ndarray
    initial_loss: float
    #: iterate at the start of every epoch, then the final iterate
    epoch_iterates: list[np.ndarray] = field(default_factory=list)

    def epoch_end_losses(self) -> list[float]:
        last: dict[int, float] = {}
        for r in self.records:
            last[r.epoch] = r.loss
        return [last[k] for k in sorted(last)]


class _Run:
    """Mutable state shared by every epoch of one training run."""

    def __init__(self, model: FiniteSumLoss, x0, config: TrainConfig, x_star):
        self.model = model
        self.config = config
        self.x = as_params(x0, model.dim)
        self.x_star = None if x_star is None else as_params(x_star, model.dim)
        self.t = 0
        self.t_offset = 0
        self.epoch_offset = 0
        self.schedule = config.schedule
        self.records: list[TraceRecord] = []
        self.epoch_iterates: list[np.ndarray] = []

    def keys(self, strategy: OrderingStrategy, idx=None) -> np.ndarray:
        if strategy.kind is OrderKind.LOGIT_NORM:
            if not hasattr(self.model, "logit_scores"):
                raise ValueError("logit_norm ordering needs a classifier model")
            return self.model.logit_scores(self.x, idx, strategy.logit_score)
        return self.model.grad_norms(self.x, idx)

    def step(self, epoch: int, g: np.ndarray, indices, start_norms=None) -> None:
        alpha = self.schedule.at(self.t - self.t_offset, epoch - self.epoch_offset)
        with np.errstate(over="ignore", invalid="ignore"):
            gnorm = float(np.linalg.norm(g))
            x = self.x - alpha * g
            if not np.all(np.isfinite(x)):
                raise DivergenceError(epoch, self.t)
            loss = self.model.objective(x)
        if not np.isfinite(loss):
            raise DivergenceError(epoch, self.t)
        self.x = x
        dist = None if self.x_star is None else float(np.sum((x - self.x_star) ** 2))
        self.records.append(
            TraceRecord(
                epoch=epoch,
                iteration=self.t,
                loss=loss,
                dist_sq=dist,
                step_size=alpha,
                epoch_start_norms=None if start_norms is None else tuple(float(v) for v in start_norms),
                indices=tuple(int(i) for i in indices),
                grad_norm=gnorm,
            )
        )
        self.t += 1

    def _attach_snapshot(self, first: int, snapshot: np.ndarray) -> None:
        # batch-start keys are only complete once the epoch has finished
        if first < len(self.records):
            self.records[first] = replace(
                self.records[first], epoch_start_norms=tuple(float(v) for v in snapshot)
            )

    # -- epoch bodies -------------------------------------------------------

    def full_epoch(self, epoch: int, strategy: OrderingStrategy) -> None:
        keys = self.keys(strategy)
        order = make_permutation(strategy, keys, epoch, self.model.n)
        start = keys
        for idx in order:
            self.step(epoch, self.model.grad(int(idx), self.x), [idx], start)
            start = None

    def selection_epoch(self, epoch: int, strategy: OrderingStrategy) -> None:
        n, S, q = self.model.n, self.config.batch_size, self.config.select_count
        snapshot = np.zeros(n)
        first = len(self.records)
        for b, lo in enumerate(range(0, n, S)):
            batch = np.arange(lo, min(lo + S, n))
            norms = self.model.grad_norms(self.x, batch)
            snapshot[batch] = norms
            top = np.argsort(-norms, kind="stable")[: min(q, len(batch))]
            keys = norms[top] if strategy.kind is not OrderKind.LOGIT_NORM else self.keys(strategy, batch[top])
            visit = batch[top[make_permutation(strategy, keys, epoch, len(top), substream=b)]]
            for idx in visit:
                self.step(epoch, self.model.grad(int(idx), self.x), [idx])
        self._attach_snapshot(first, snapshot)

    def sort_before_epoch(self, epoch: int, strategy: OrderingStrategy) -> None:
        n, S = self.model.n, self.config.batch_size
        size = self.config.select_count or S
        keys = self.keys(strategy)
        order = make_permutation(strategy, keys, epoch, n)
        batches = balanced_batches(order, self.model.labels, size, n_batches=-(-n // S))
        start = keys
        for batch in batches:
            self.step(epoch, self.model.mean_grad(self.x, batch), batch, start)
            start = None

    def sort_within_epoch(self, epoch: int, strategy: OrderingStrategy) -> None:
        n, S, q = self.model.n, self.config.batch_size, self.config.select_count
        snapshot = np.zeros(n)
        first = len(self.records)
        for b, lo in enumerate(range(0, n, S)):
            batch = np.arange(lo, min(lo + S, n))
            keys = self.keys(strategy, batch) if strategy.needs_keys else None
            if keys is not None:
                snapshot[batch] = keys
            chosen = batch[make_permutation(strategy, keys, epoch, len(batch), substream=b)[: min(q, len(batch))]]
            self.step(epoch, self.model.mean_grad(self.x, chosen), chosen)
        if strategy.needs_keys:
            self._attach_snapshot(first, snapshot)

    def plain_minibatch_epoch(self, epoch: int, strategy: OrderingStrategy) -> None:
        n, S = self.model.n, self.config.batch_size
        keys = self.keys(strategy) if strategy.needs_keys else None
        order = make_permutation(strategy, keys, epoch, n)
        start = keys
        for lo in range(0, n, S):
            batch = order[lo : lo + S]
            self.step(epoch, self.model.mean_grad(self.x, batch), batch, start)
            start = None


def balanced_batches(order, labels, size: int, n_batches: int | None = None) -> list[np.ndarray]:
    """Cut a sorted visit order into mini-batches of ``size``.

    With class labels, the order is split into per-class queues (each keeping
    the sorted order) and every batch is dealt round-robin across the
    non-empty queues in class-id order, so classes contribute equal counts
    (within one) while data lasts. Without labels the batches are consecutive
    slices. At most ``n_batches`` batches are built; samples left over are
    skipped.
    """
    order = np.asarray(order, dtype=np.int64)
    if labels is None:
        batches = [order[lo : lo + size] for lo in range(0, len(order), size)]
    else:
        labels = np.asarray(labels)
        queues = [list(order[labels[order] == c]) for c in np.unique(labels[order])]
        heads = [0] * len(queues)
        batches = []
        remaining = len(order)
        while remaining:
            batch = []
            while len(batch) < size and remaining:
                for c, queue in enumerate(queues):
                    if len(batch) == size:
                        break
                    if heads[c] < len(queue):
                        batch.append(queue[heads[c]])
                        heads[c] += 1
                        remaining -= 1
            batches.append(np.asarray(batch, dtype=np.int64))
    if n_batches is not None:
        batches = batches[:n_batches]
    return batches


_MAIN_EPOCH = {
    Algorithm.FULL_ORDERING: _Run.full_epoch,
    Algorithm.DATA_SELECTION: _Run.selection_epoch,
    Algorithm.SORT_BEFORE_MINIBATCH: _Run.sort_before_epoch,
    Algorithm.SORT_WITHIN_MINIBATCH: _Run.sort_within_epoch,
}

# warm-start epochs always visit the full data
_WARM_EPOCH = {
    Algorithm.FULL_ORDERING: _Run.full_epoch,
    Algorithm.DATA_SELECTION: _Run.full_epoch,
    Algorithm.SORT_BEFORE_MINIBATCH: _Run.plain_minibatch_epoch,
    Algorithm.SORT_WITHIN_MINIBATCH: _Run.plain_minibatch_epoch,
}


def train(model: FiniteSumLoss, x0, config: TrainConfig, x_star=None) -> TrainResult:
    """Run ``config.epochs`` epochs from ``x0`` and return the per-update trace.

    Raises :class:`DivergenceError` as soon as an iterate or the objective
    stops being finite; the exception carries the records written so far.
    """
    if config.batch_size is not None and config.batch_size > model.n:
        raise ValueError(f"batch_size {config.batch_size} exceeds n={model.n}")
    run = _Run(model, x0, config, x_star)
    initial_loss = model.objective(run.x)
    separate = config.warm_start_schedule is not None and config.warm_start_epochs > 0
    if separate:
        run.schedule = config.warm_start_schedule
    try:
        for epoch in range(config.epochs):
            run.epoch_iterates.append(run.x.copy())
            if separate and epoch == config.warm_start_epochs:
                run.schedule = config.schedule
                run.t_offset, run.epoch_offset = run.t, epoch
            if epoch < config.warm_start_epochs:
                _WARM_EPOCH[config.algorithm](run, epoch, config.warm_strategy)
            else:
                _MAIN_EPOCH[config.algorithm](run, epoch, config.strategy)
    except DivergenceError as exc:
        exc.records = run.records
        raise
    run.epoch_iterates.append(run.x.copy())
    return TrainResult(run.records, run.x, initial_loss, run.epoch_iterates)


def _require(config: TrainConfig, algorithm: Algorithm) -> None:
    if config.algorithm is not algorithm:
        raise ValueError(f"config is for {config.algorithm.value}, not {algorithm.value}")


def train_full_ordering(model, x0, config: TrainConfig, x_star=None) -> TrainResult:
    _require(config, Algorithm.FULL_ORDERING)
    return train(model, x0, config, x_star)


def train_data_selection(model, x0, config: TrainConfig, x_star=None) -> TrainResult:
    _require(config, Algorithm.DATA_SELECTION)
    return train(model, x0, config, x_star)


def train_sort_before_minibatch(model, x0, config: TrainConfig, x_star=None) -> TrainResult:
    _require(config, Algorithm.SORT_BEFORE_MINIBATCH)
    return train(model, x0, config, x_star)


def train_sort_within_minibatch(model, x0, config: TrainConfig, x_star=None) -> TrainResult:
    _require(config, Algorithm.SORT_WITHIN_MINIBATCH)
    return train(model, x0, config, x_star)
