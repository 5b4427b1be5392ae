import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gradorder.bounds import (
    BoundInputs,
    MinimizerError,
    bound_thm1,
    bound_thm2,
    bound_thm3,
    bound_thm4,
    epsilon_k,
    find_minimizer,
    pairing_sum,
)
from gradorder.losses import FiniteSumLoss, SyntheticAnchorLoss


class Quadratic1D(FiniteSumLoss):
    def __init__(self, anchors):
        self.d = np.asarray(anchors, dtype=float)
        self.n, self.dim = len(self.d), 1

    def value(self, i, x):
        return float((x[0] - self.d[i]) ** 2)

    def grad(self, i, x):
        return np.array([2 * (x[0] - self.d[i])])


class Linear(FiniteSumLoss):
    n, dim = 1, 1

    def value(self, i, x):
        return float(x[0])

    def grad(self, i, x):
        return np.array([1.0])


def reference(inp: BoundInputs, constant: bool, strong: bool) -> float:
    """Term-by-term loop evaluation with 1-based indices."""
    n = len(inp.M)
    a = [inp.alpha_k] * n if constant else list(inp.alphas)
    D = inp.dist_sq_k**0.5
    total = inp.dist_sq_k
    for i in range(1, n + 1):
        total -= 2 * D * a[i - 1] * inp.M[i - 1]
    quad = 0.0
    for i in range(1, n):
        quad += 2 * (n - i) * inp.C[i - 1] ** 2
    for i in range(1, n + 1):
        quad += inp.C[i - 1] ** 2
    total += inp.alpha_k**2 * quad
    if strong:
        curv = 0.0
        for i in range(1, n):
            curv += (n - i) * inp.m[i - 1] * max(inp.M[i - 1], inp.M_prime[i - 1]) ** 2
        third = inp.alpha_k if constant else inp.alpha_k1
        total -= inp.alpha_k**2 * third * curv
    return total + n * inp.alpha_k * inp.eps_k


def make(n, dist=4.0, alpha=0.1, M=None, C=None, m=None, Mp=None, alphas=None, alpha_k1=None, eps=0.0):
    ones = [1.0] * n
    alphas = alphas or [alpha] * n
    return BoundInputs(dist, M or ones, Mp or M or ones, C or ones, m or ones, alphas, alphas[0],
                       alpha if alpha_k1 is None else alpha_k1, eps)


def test_zero_step_returns_distance():
    for f in (bound_thm1, bound_thm2, bound_thm3, bound_thm4):
        assert f(make(1, dist=2.5, alpha=0.0)) == 2.5
        assert f(make(3, dist=2.5, alpha=0.0)) == 2.5


def test_single_component_hand_value():
    inp = make(1, dist=4.0, alpha=0.1, M=[1.0], C=[2.0], m=[2.0])
    # 4 - 2*2*0.1*1 + 0.01*4 - 0 + 0
    assert bound_thm1(inp) == pytest.approx(3.64, abs=1e-15)


def test_two_components_all_ones():
    inp = make(2, dist=1.0, alpha=1.0)
    # 1 - 2*1*(1+1) + 1*(2*1*1 + 2) - 1*1*(1*1*1) + 0 = 0
    assert bound_thm1(inp) == 0.0
    assert bound_thm3(inp) == 1.0
    assert bound_thm1(inp) == reference(inp, constant=False, strong=True)


def test_two_components_hand_values():
    inp = BoundInputs(dist_sq_k=0.25, M=[3.0, 1.0], M_prime=[3.0, 2.0], C=[4.0, 2.0], m=[2.0, 2.0],
                      alphas=[0.1, 0.05], alpha_k=0.1, alpha_k1=0.05, eps_k=0.5)
    # D = 0.5: 0.25 - 2*0.5*(0.3 + 0.05) + 0.01*(2*1*16 + 20) - 0.01*0.05*(1*2*9) + 2*0.1*0.5
    assert bound_thm1(inp) == pytest.approx(0.25 - 0.35 + 0.52 - 0.009 + 0.1, abs=1e-15)
    assert bound_thm3(inp) == pytest.approx(0.25 - 0.35 + 0.52 + 0.1, abs=1e-15)
    # constant alpha = 0.1 throughout: first-order 2*0.5*0.1*4 = 0.4, curvature 0.001*18
    assert bound_thm2(inp) == pytest.approx(0.25 - 0.4 + 0.52 - 0.018 + 0.1, abs=1e-15)
    assert bound_thm4(inp) == pytest.approx(0.25 - 0.4 + 0.52 + 0.1, abs=1e-15)


vals = st.floats(0.0, 10.0, allow_nan=False)


@st.composite
def bound_inputs(draw):
    n = draw(st.integers(1, 7))
    seq = lambda: draw(st.lists(vals, min_size=n, max_size=n))
    alphas = sorted(draw(st.lists(st.floats(0, 0.1), min_size=n, max_size=n)), reverse=True)
    return BoundInputs(draw(vals), seq(), seq(), seq(), seq(), alphas, alphas[0], draw(st.floats(0, 0.1)), draw(vals))


@settings(max_examples=200)
@given(bound_inputs())
def test_matches_loop_reference(inp):
    for f, const, strong in ((bound_thm1, False, True), (bound_thm2, True, True),
                             (bound_thm3, False, False), (bound_thm4, True, False)):
        ref = reference(inp, const, strong)
        assert f(inp) == pytest.approx(ref, rel=1e-12, abs=1e-12)


@given(bound_inputs())
def test_zero_curvature_collapses_to_convex(inp):
    flat = BoundInputs(inp.dist_sq_k, inp.M, inp.M_prime, inp.C, [0.0] * len(inp.M), inp.alphas,
                       inp.alpha_k, inp.alpha_k1, inp.eps_k)
    assert bound_thm1(flat) == bound_thm3(flat)
    assert bound_thm2(flat) == bound_thm4(flat)
    assert bound_thm3(inp) >= bound_thm1(inp)


@given(st.integers(1, 6), st.floats(0.1, 5), st.floats(0.1, 5), st.floats(0, 0.1), st.randoms(use_true_random=False))
def test_constant_step_bounds_under_joint_permutation(n, c, mi, alpha, rnd):
    M = [rnd.uniform(0, 3) for _ in range(n)]
    perm = list(range(n))
    rnd.shuffle(perm)
    Mp = [M[i] for i in perm]
    a = BoundInputs(1.0, M, M, [c] * n, [mi] * n, [alpha] * n, alpha, alpha, 0.1)
    b = BoundInputs(1.0, Mp, Mp, [c] * n, [mi] * n, [alpha] * n, alpha, alpha, 0.1)
    assert bound_thm4(a) == pytest.approx(bound_thm4(b), rel=1e-12, abs=1e-15)
    # the strongly convex variant differs only through the (n - i)-weighted curvature sum
    curv = lambda seq: sum((n - i) * mi * seq[i - 1] ** 2 for i in range(1, n))
    diff = bound_thm2(a) - bound_thm2(b)
    assert diff == pytest.approx(-alpha**3 * (curv(M) - curv(Mp)), rel=1e-9, abs=1e-15)


def test_constant_strong_bound_depends_on_order():
    a = BoundInputs(1.0, [2.0, 1.0], [2.0, 1.0], [1.0, 1.0], [2.0, 2.0], [0.1, 0.1], 0.1, 0.1, 0.0)
    b = BoundInputs(1.0, [1.0, 2.0], [1.0, 2.0], [1.0, 1.0], [2.0, 2.0], [0.1, 0.1], 0.1, 0.1, 0.0)
    assert bound_thm2(b) - bound_thm2(a) == pytest.approx(0.001 * 2 * (4 - 1), rel=1e-12)


def test_length_mismatch():
    bad = BoundInputs(1.0, [1.0, 2.0], [1.0], [1.0, 1.0], [1.0, 1.0], [0.1, 0.1], 0.1, 0.1, 0.0)
    with pytest.raises(ValueError):
        bound_thm1(bad)
    with pytest.raises(ValueError):
        bound_thm1(BoundInputs(-1.0, [1.0], [1.0], [1.0], [1.0], [0.1], 0.1, 0.1, 0.0))


def test_epsilon_examples():
    m = Quadratic1D([0.0])
    assert epsilon_k(m, [1.0], [0.0]) == 1.0
    s = SyntheticAnchorLoss(np.random.default_rng(0).uniform(-10, 10, (3, 2)))
    x_star = find_minimizer(s, np.zeros(2))
    assert epsilon_k(s, x_star, x_star) == 0.0
    xk = np.array([0.7, -1.2])
    dist = np.linalg.norm(xk - x_star)
    brute = max(abs((s.value(i, xk) - s.value(i, x_star)) - np.linalg.norm(s.grad(i, xk)) * dist) for i in range(3))
    assert epsilon_k(s, xk, x_star) == pytest.approx(brute, rel=1e-13)


def test_pairing_descending_is_optimal_small():
    rng = np.random.default_rng(1)
    for _ in range(10):
        n = 5
        alphas = np.sort(rng.uniform(0, 1, n))[::-1]
        norms = rng.uniform(0, 1, n)
        best = max(pairing_sum(alphas, norms[list(p)]) for p in itertools.permutations(range(n)))
        assert pairing_sum(alphas, np.sort(norms)[::-1]) == best


def test_find_minimizer_reaches_tolerance():
    m = SyntheticAnchorLoss(np.random.default_rng(2).uniform(-10, 10, (32, 2)))
    x = find_minimizer(m, np.zeros(2))
    assert np.linalg.norm(m.full_grad(x)) < 1e-9
    assert np.allclose(find_minimizer(Quadratic1D([1.0, 3.0]), [10.0]), [2.0], atol=1e-12)


def test_find_minimizer_unbounded():
    with pytest.raises(MinimizerError):
        find_minimizer(Linear(), [0.0])
