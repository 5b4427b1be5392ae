"""Parameter-vector helpers and step-size schedules."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np


class ScheduleKind(str, Enum):
    CONSTANT = "constant"
    PER_ITERATION = "per_iteration"
    PER_EPOCH = "per_epoch"


@dataclass(frozen=True)
class StepSchedule:
    """Step-size rule alpha_{i,k}.

    ``per_iteration`` decays harmonically in the global update counter
    ``t = k * n + i`` (alpha0 / (t + 1)); ``per_epoch`` decays harmonically in
    the epoch index (alpha0 / (k + 1)); ``constant`` ignores both.
    ``n`` is the number of updates per epoch and only matters for
    :func:`step_size`; trainers call :meth:`at` with their own counter.
    """

    kind: ScheduleKind
    alpha0: float
    n: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", ScheduleKind(self.kind))
        if not np.isfinite(self.alpha0) or self.alpha0 < 0:
            raise ValueError(f"alpha0 must be finite and >= 0, got {self.alpha0}")
        if self.n < 1:
            raise ValueError(f"n must be positive, got {self.n}")

    def at(self, t: int, epoch: int) -> float:
        """Step size for global update ``t`` falling in ``epoch``."""
        if self.kind is ScheduleKind.CONSTANT:
            return self.alpha0
        if self.kind is ScheduleKind.PER_ITERATION:
            return self.alpha0 / (t + 1)
        return self.alpha0 / (epoch + 1)


def step_size(schedule: StepSchedule, epoch: int, iteration: int) -> float:
    if epoch < 0 or iteration < 0:
        raise ValueError("epoch and iteration must be non-negative")
    if iteration >= schedule.n:
        raise ValueError(f"iteration {iteration} out of range for n={schedule.n}")
    return schedule.at(epoch * schedule.n + iteration, epoch)


def as_params(values, dim: int | None = None) -> np.ndarray:
    """Copy ``values`` into a fresh finite float64 vector."""
    x = np.array(values, dtype=np.float64).reshape(-1)
    if dim is not None and x.shape[0] != dim:
        raise ValueError(f"expected {dim} parameters, got {x.shape[0]}")
    if not np.all(np.isfinite(x)):
        raise ValueError("parameter vector contains non-finite entries")
    return x
