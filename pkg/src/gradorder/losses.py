"""Finite-sum losses F(x) = (1/n) sum_i f_i(x) with analytic component gradients.

Every model exposes the same small surface used by the trainers:
``value(i, x)``, ``grad(i, x)``, vectorised ``values(x)``, ``grads(x, idx)``,
``grad_norms(x, idx)``, ``mean_grad(x, idx)`` and ``objective(x)``.
Parameters are always a flat float64 vector; each model documents its own
layout.
"""

from __future__ import annotations

from enum import Enum
from typing import Sequence

import numpy as np


class FiniteSumLoss:
    """Base class; subclasses override the vectorised methods where cheaper."""

    n: int
    dim: int
    #: curvature lower bound m_i shared by every component, None if only convex
    strong_convexity: float | None = None
    #: class ids for class-balanced batching, None for regression-style data
    labels: np.ndarray | None = None

    def _check_x(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.dim,):
            raise ValueError(f"parameter vector has shape {x.shape}, expected ({self.dim},)")
        return x

    def _check_i(self, i: int) -> int:
        if not 0 <= i < self.n:
            raise ValueError(f"component index {i} out of range [0, {self.n})")
        return int(i)

    def _idx(self, idx) -> np.ndarray:
        if idx is None:
            return np.arange(self.n)
        idx = np.asarray(idx, dtype=np.int64).reshape(-1)
        if idx.size and (idx.min() < 0 or idx.max() >= self.n):
            raise ValueError("component index out of range")
        return idx

    def value(self, i: int, x: np.ndarray) -> float:
        raise NotImplementedError

    def grad(self, i: int, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def values(self, x: np.ndarray) -> np.ndarray:
        return np.array([self.value(i, x) for i in range(self.n)])

    def grads(self, x: np.ndarray, idx=None) -> np.ndarray:
        return np.stack([self.grad(i, x) for i in self._idx(idx)])

    def grad_norms(self, x: np.ndarray, idx=None) -> np.ndarray:
        return np.linalg.norm(self.grads(x, idx), axis=1)

    def mean_grad(self, x: np.ndarray, idx) -> np.ndarray:
        return self.grads(x, idx).mean(axis=0)

    def full_grad(self, x: np.ndarray) -> np.ndarray:
        return self.mean_grad(x, None)

    def objective(self, x: np.ndarray) -> float:
        return float(np.mean(self.values(x)))


class AnchorMode(str, Enum):
    QUARTIC_PLUS_QUADRATIC = "quartic_quadratic"
    INDICATOR_SWITCHED = "indicator"


class SyntheticAnchorLoss(FiniteSumLoss):
    """Component i is anchored at data vector d_i, with u = x - d_i.

    ``quartic_quadratic``: f_i(x) = sum_j u_j**4 + u_j**2 (strongly convex, m_i = 2).

    ``indicator``: coordinate-wise switch, u_j**4 where u_j < 0 and u_j**2
    otherwise. Both branches vanish with zero slope at u_j = 0, so the
    quadratic-branch gradient used there is an exact gradient. Convex but not
    strongly convex.
    """

    def __init__(self, anchors, mode: AnchorMode | str = AnchorMode.QUARTIC_PLUS_QUADRATIC):
        self.anchors = np.array(anchors, dtype=np.float64, ndmin=2)
        self.anchors.setflags(write=False)
        self.n, self.dim = self.anchors.shape
        self.mode = AnchorMode(mode)
        self.strong_convexity = 2.0 if self.mode is AnchorMode.QUARTIC_PLUS_QUADRATIC else None

    def _terms(self, u: np.ndarray) -> np.ndarray:
        u2 = u * u
        if self.mode is AnchorMode.QUARTIC_PLUS_QUADRATIC:
            return u2 * u2 + u2
        return np.where(u < 0, u2 * u2, u2)

    def _dterms(self, u: np.ndarray) -> np.ndarray:
        if self.mode is AnchorMode.QUARTIC_PLUS_QUADRATIC:
            return 4 * u**3 + 2 * u
        return np.where(u < 0, 4 * u**3, 2 * u)

    def value(self, i, x):
        u = self._check_x(x) - self.anchors[self._check_i(i)]
        return float(self._terms(u).sum())

    def grad(self, i, x):
        u = self._check_x(x) - self.anchors[self._check_i(i)]
        return self._dterms(u)

    def values(self, x):
        return self._terms(self._check_x(x) - self.anchors).sum(axis=1)

    def grads(self, x, idx=None):
        return self._dterms(self._check_x(x) - self.anchors[self._idx(idx)])


class LinRegQuarticLoss(FiniteSumLoss):
    """Quartic-plus-quadratic linear regression, f_i = r**4 + r**2 with r = w.x_i + b - y_i.

    Parameter layout: ``[w_0, ..., w_{d-1}, b]``. Returned gradients are
    multiplied by ``grad_scale`` (values are not), which keeps the high-power
    gradients on raw-scale features from overflowing.
    """

    def __init__(self, features, targets, grad_scale: float = 1e-10):
        self.X = np.array(features, dtype=np.float64, ndmin=2)
        self.y = np.array(targets, dtype=np.float64).reshape(-1)
        if self.X.shape[0] != self.y.shape[0]:
            raise ValueError("features and targets disagree on row count")
        if not grad_scale > 0:
            raise ValueError("grad_scale must be positive")
        self.X.setflags(write=False)
        self.y.setflags(write=False)
        self.n = self.X.shape[0]
        self.dim = self.X.shape[1] + 1
        self.grad_scale = float(grad_scale)

    def _resid(self, x, rows):
        # row-wise sum rather than BLAS matvec so single-row and batched gradients round identically
        return (self.X[rows] * x[:-1]).sum(axis=-1) + x[-1] - self.y[rows]

    def value(self, i, x):
        x = self._check_x(x)
        r = self._resid(x, self._check_i(i))
        return float(r**4 + r**2)

    def grad(self, i, x):
        x = self._check_x(x)
        i = self._check_i(i)
        r = self._resid(x, i)
        return self.grad_scale * (4 * r**3 + 2 * r) * np.append(self.X[i], 1.0)

    def values(self, x):
        x = self._check_x(x)
        r2 = (self.X @ x[:-1] + x[-1] - self.y) ** 2
        return r2 * r2 + r2

    def grads(self, x, idx=None):
        idx = self._idx(idx)
        r = self._resid(self._check_x(x), idx)
        coef = self.grad_scale * (4 * r**3 + 2 * r)
        return np.column_stack([coef[:, None] * self.X[idx], coef])


def loss_value(model: FiniteSumLoss, component: int, x) -> float:
    return model.value(component, x)


def loss_grad(model: FiniteSumLoss, component: int, x) -> np.ndarray:
    return model.grad(component, x)


def grad_norms_at(model: FiniteSumLoss, x) -> np.ndarray:
    """Euclidean norm of every component gradient at the single point ``x``."""
    return model.grad_norms(np.asarray(x, dtype=np.float64))


class GradCapTracker:
    """Running estimate of the per-component gradient caps C_i.

    Caps are ``margin`` times the largest norm observed so far for each
    component, unless fixed caps are supplied.
    """

    def __init__(self, n: int, margin: float = 1.1, fixed: Sequence[float] | None = None):
        self.margin = margin
        self.observed = np.zeros(n)
        self.fixed = None if fixed is None else np.asarray(fixed, dtype=np.float64)
        if self.fixed is not None and self.fixed.shape != (n,):
            raise ValueError("fixed caps must have one entry per component")

    def observe(self, indices, norms) -> None:
        np.maximum.at(self.observed, np.asarray(indices, dtype=np.int64), np.asarray(norms, dtype=np.float64))

    @property
    def caps(self) -> np.ndarray:
        if self.fixed is not None:
            return self.fixed.copy()
        return self.margin * self.observed
