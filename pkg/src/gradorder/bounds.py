"""Per-epoch upper bounds on ||x_{k+1} - x*||^2 for shuffling SGD.

The four bounds share the structure

    D^2 - 2 D sum_i a_i M_i
        + a_k^2 (2 sum_{i<n} (n-i) C_i^2 + sum_i C_i^2)
        - a_k^2 a_{k+1} sum_{i<n} (n-i) m_i max(M_i, M'_i)^2
        + n a_k eps_k

with D = ||x_k - x*||, sequences in visit order and i counted from 1.
The strongly convex bounds keep the m-term, the convex ones drop it; the
constant-step bounds use a single alpha everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .losses import FiniteSumLoss


@dataclass(frozen=True)
class BoundInputs:
    dist_sq_k: float
    M: Sequence[float]
    M_prime: Sequence[float]
    C: Sequence[float]
    m: Sequence[float]
    alphas: Sequence[float]
    alpha_k: float
    alpha_k1: float
    eps_k: float

    def arrays(self):
        arrs = [np.asarray(v, dtype=np.float64).reshape(-1) for v in (self.M, self.M_prime, self.C, self.m, self.alphas)]
        n = arrs[0].shape[0]
        if n < 1 or any(a.shape[0] != n for a in arrs):
            raise ValueError("M, M_prime, C, m and alphas must share one length n >= 1")
        if self.dist_sq_k < 0:
            raise ValueError("dist_sq_k must be non-negative")
        return arrs


def _common(inp: BoundInputs, alphas, alpha_k):
    M, _, C, _, _ = inp.arrays()
    n = M.shape[0]
    weights = n - np.arange(1, n)  # (n - i) for i = 1..n-1
    D = np.sqrt(inp.dist_sq_k)
    first = 2.0 * D * float(np.dot(alphas, M))
    second = alpha_k**2 * (2.0 * float(np.dot(weights, C[: n - 1] ** 2)) + float(np.sum(C**2)))
    return inp.dist_sq_k - first + second + n * alpha_k * inp.eps_k


def _curvature_sum(inp: BoundInputs) -> float:
    M, Mp, _, m, _ = inp.arrays()
    n = M.shape[0]
    weights = n - np.arange(1, n)
    peak = np.maximum(M, Mp)[: n - 1]
    return float(np.sum(weights * m[: n - 1] * peak**2))


def bound_thm1(inp: BoundInputs) -> float:
    """Strongly convex, step size decreasing per iteration."""
    alphas = inp.arrays()[4]
    return _common(inp, alphas, inp.alpha_k) - inp.alpha_k**2 * inp.alpha_k1 * _curvature_sum(inp)


def bound_thm2(inp: BoundInputs) -> float:
    """Strongly convex, constant step size ``alpha_k``."""
    a = inp.alpha_k
    alphas = np.full(inp.arrays()[4].shape, a)
    return _common(inp, alphas, a) - a**3 * _curvature_sum(inp)


def bound_thm3(inp: BoundInputs) -> float:
    """Convex, step size decreasing per iteration."""
    return _common(inp, inp.arrays()[4], inp.alpha_k)


def bound_thm4(inp: BoundInputs) -> float:
    """Convex, constant step size ``alpha_k``."""
    a = inp.alpha_k
    return _common(inp, np.full(inp.arrays()[4].shape, a), a)


def epsilon_k(model: FiniteSumLoss, x_k, x_star) -> float:
    """max_i |(f_i(x_k) - f_i(x*)) - ||grad f_i(x_k)|| * ||x_k - x*|||."""
    x_k = np.asarray(x_k, dtype=np.float64)
    x_star = np.asarray(x_star, dtype=np.float64)
    gap = model.values(x_k) - model.values(x_star)
    lin = model.grad_norms(x_k) * np.linalg.norm(x_k - x_star)
    return float(np.max(np.abs(gap - lin)))


def pairing_sum(alphas, norms) -> float:
    """First-order term sum_i alpha_i ||M_i|| for a given pairing."""
    return float(np.dot(np.asarray(alphas, dtype=np.float64), np.asarray(norms, dtype=np.float64)))


class MinimizerError(RuntimeError):
    pass


def find_minimizer(
    model: FiniteSumLoss,
    x0,
    tol: float = 1e-12,
    max_iter: int = 10_000,
) -> np.ndarray:
    """Full-batch steepest descent with exact line search until ||grad F|| < tol.

    The line search bisects on the sign of the directional derivative, so it
    only ever compares gradients; objective differences vanish into rounding
    long before the gradient does. When rounding noise in the summed gradient
    sits above ``tol`` the descent stalls first; the result is then accepted
    if the gradient is within a small multiple of that noise floor, otherwise
    :class:`MinimizerError` is raised.
    """
    x = np.array(x0, dtype=np.float64)
    s_hi = 1.0
    for _ in range(max_iter):
        g = model.full_grad(x)
        if float(np.linalg.norm(g)) < tol:
            return x
        d = -g
        # bracket the 1-D minimiser: slope along d turns non-negative
        while float(d @ model.full_grad(x + s_hi * d)) < 0:
            s_hi *= 2.0
            if s_hi > 1e300:
                raise MinimizerError("objective appears unbounded below")
        lo, hi = 0.0, s_hi
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if float(d @ model.full_grad(x + mid * d)) < 0:
                lo = mid
            else:
                hi = mid
        s = lo if lo > 0 else hi
        x_new = x + s * d
        if np.array_equal(x_new, x):
            break
        x = x_new
        s_hi = 2.0 * s
    floor = _gradient_noise_floor(model, x)
    gn = float(np.linalg.norm(model.full_grad(x)))
    if gn <= max(tol, floor):
        return x
    raise MinimizerError(f"gradient norm {gn:.3e} above tolerance {max(tol, floor):.3e}")


def _gradient_noise_floor(model: FiniteSumLoss, x) -> float:
    # rounding error of an n-term mean of component gradients, with headroom
    scale = float(np.mean(model.grad_norms(x)))
    return 64.0 * np.finfo(np.float64).eps * max(scale, 1.0) * np.sqrt(model.n)
