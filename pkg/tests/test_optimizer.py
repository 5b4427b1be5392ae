import numpy as np
import pytest

from gradorder.core import StepSchedule
from gradorder.losses import FiniteSumLoss, SyntheticAnchorLoss
from gradorder.optimizer import (
    DivergenceError,
    TrainConfig,
    balanced_batches,
    train,
    train_data_selection,
    train_full_ordering,
    train_sort_before_minibatch,
    train_sort_within_minibatch,
)
from gradorder.ordering import OrderingStrategy


class Quadratic(FiniteSumLoss):
    """f_i(x) = ||x - d_i||^2, optional class labels."""

    def __init__(self, anchors, labels=None):
        self.d = np.array(anchors, dtype=float, ndmin=2)
        self.n, self.dim = self.d.shape
        self.labels = None if labels is None else np.asarray(labels)

    def value(self, i, x):
        return float(np.sum((x - self.d[i]) ** 2))

    def grad(self, i, x):
        return 2 * (x - self.d[i])


def cfg(alg, kind="decreasing", sched=("constant", 0.1), epochs=1, **kw):
    return TrainConfig(alg, OrderingStrategy(kind, seed=3), StepSchedule(*sched), epochs, **kw)


def test_single_component_is_strategy_free():
    m = SyntheticAnchorLoss([[1.0, -1.0]])
    traces = {
        k: [(r.loss, r.step_size) for r in train(m, np.zeros(2), cfg("full_ordering", k, ("constant", 1e-3))).records]
        for k in ("random", "decreasing", "increasing", "incremental")
    }
    assert len({tuple(v) for v in traces.values()}) == 1


def test_zero_step_never_moves():
    m = SyntheticAnchorLoss(np.random.default_rng(0).uniform(-10, 10, (5, 2)))
    r = train(m, [1.0, 2.0], cfg("full_ordering", sched=("constant", 0.0), epochs=3))
    assert np.array_equal(r.x_final, [1.0, 2.0])
    assert len({rec.loss for rec in r.records}) == 1


def test_two_step_recursion_by_hand():
    d1, d2, a = np.array([1.0, 2.0]), np.array([-3.0, 0.5]), 0.05
    x0 = np.array([0.3, -0.7])
    x1 = x0 - 2 * a * (x0 - d1)
    x2 = x1 - 2 * a * (x1 - d2)
    r = train_full_ordering(Quadratic([d1, d2]), x0, cfg("full_ordering", "incremental", ("constant", a)))
    np.testing.assert_allclose(r.x_final, x2, rtol=0, atol=1e-12)
    assert [rec.indices for rec in r.records] == [(0,), (1,)]


def test_full_ordering_visits_by_epoch_start_norms():
    m = Quadratic([[0.0], [5.0], [-2.0], [1.0]])
    r = train(m, [0.0], cfg("full_ordering", sched=("constant", 1e-3)))
    assert [rec.indices[0] for rec in r.records] == [1, 2, 3, 0]
    assert r.records[0].epoch_start_norms == (0.0, 10.0, 4.0, 2.0)
    assert all(rec.epoch_start_norms is None for rec in r.records[1:])


def test_selection_visits_per_batch_argmax():
    m = Quadratic([[1.0], [-4.0], [2.5], [0.5]])
    r = train_data_selection(m, [0.0], cfg("data_selection", sched=("constant", 0.0), batch_size=2, select_count=1))
    norms = m.grad_norms(np.zeros(1))
    brute = [max(b, key=lambda i: norms[i]) for b in ([0, 1], [2, 3])]
    assert [rec.indices[0] for rec in r.records] == brute
    assert r.records[0].epoch_start_norms == tuple(norms)


def test_selection_without_dropping_visits_everything():
    m = SyntheticAnchorLoss(np.random.default_rng(1).uniform(-10, 10, (7, 2)))
    r = train(m, np.zeros(2), cfg("data_selection", "random", ("constant", 1e-5), batch_size=3))
    assert sorted(rec.indices[0] for rec in r.records) == list(range(7))


def test_selection_rejects_q_above_s():
    with pytest.raises(ValueError):
        cfg("data_selection", batch_size=2, select_count=3)


def test_sort_before_full_batch_is_gradient_descent():
    m = Quadratic([[1.0, 0.0], [3.0, -2.0], [-1.0, 4.0]])
    x0 = np.array([0.5, 0.5])
    r = train_sort_before_minibatch(m, x0, cfg("sort_before_minibatch", batch_size=3))
    np.testing.assert_allclose(r.x_final, x0 - 0.1 * m.full_grad(x0), rtol=0, atol=1e-15)
    assert len(r.records) == 1


def test_sort_before_balances_classes():
    m = Quadratic([[4.0], [3.0], [2.0], [1.0]], labels=[0, 0, 1, 1])
    r = train(m, [0.0], cfg("sort_before_minibatch", sched=("constant", 0.0), batch_size=2))
    # norms 8,6,4,2: class 0 queue (0,1), class 1 queue (2,3), dealt round-robin
    assert [rec.indices for rec in r.records] == [(0, 2), (1, 3)]


def test_sort_before_unlabelled_slices_sorted_order():
    m = Quadratic([[1.0], [4.0], [2.0], [3.0]])
    r = train(m, [0.0], cfg("sort_before_minibatch", sched=("constant", 0.0), batch_size=2))
    assert [rec.indices for rec in r.records] == [(1, 3), (2, 0)]


def test_sort_before_with_q_visits_fewer_samples():
    m = Quadratic([[1.0], [4.0], [2.0], [3.0], [5.0]])
    r = train(m, [0.0], cfg("sort_before_minibatch", sched=("constant", 0.0), batch_size=2, select_count=1))
    assert [rec.indices for rec in r.records] == [(4,), (1,), (3,)]


def test_sort_within_top_one_follows_largest_gradient():
    m = Quadratic([[2.5], [0.5]])  # norms at 0: 5 and 1
    r = train_sort_within_minibatch(m, [0.0], cfg("sort_within_minibatch", batch_size=2, select_count=1))
    np.testing.assert_allclose(r.x_final, 0.0 - 0.1 * m.grad(0, np.zeros(1)))


def test_sort_within_mean_of_top_two():
    rng = np.random.default_rng(5)
    m = Quadratic(rng.normal(size=(4, 3)))
    x0 = rng.normal(size=3)
    norms = [np.linalg.norm(m.grad(i, x0)) for i in range(4)]
    top = sorted(range(4), key=lambda i: -norms[i])[:2]
    expected = x0 - 0.1 * (m.grad(top[0], x0) + m.grad(top[1], x0)) / 2
    r = train(m, x0, cfg("sort_within_minibatch", batch_size=4, select_count=2))
    np.testing.assert_allclose(r.x_final, expected, rtol=0, atol=1e-14)


def test_sort_within_full_batch_matches_sort_before():
    rng = np.random.default_rng(6)
    m = Quadratic(rng.normal(size=(4, 2)))
    x0 = rng.normal(size=2)
    a = train(m, x0, cfg("sort_within_minibatch", batch_size=4, select_count=4))
    b = train(m, x0, cfg("sort_before_minibatch", batch_size=4))
    np.testing.assert_allclose(a.x_final, b.x_final, rtol=0, atol=1e-15)


def test_batch_mean_ignores_member_order():
    rng = np.random.default_rng(7)
    m = Quadratic(rng.normal(size=(6, 2)))
    x = rng.normal(size=2)
    assert np.array_equal(m.mean_grad(x, [0, 3, 5]).round(14), m.mean_grad(x, [5, 0, 3]).round(14))


def test_warm_start_prefix_equals_pure_random_run():
    m = SyntheticAnchorLoss(np.random.default_rng(8).uniform(-10, 10, (8, 2)))
    sched = ("per_iteration", 1e-4)
    warm = train(m, np.zeros(2), TrainConfig("full_ordering", OrderingStrategy("decreasing", seed=4),
                                             StepSchedule(*sched), 5, warm_start_epochs=3))
    pure = train(m, np.zeros(2), TrainConfig("full_ordering", OrderingStrategy("random", seed=4),
                                             StepSchedule(*sched), 3))
    assert warm.records[: len(pure.records)] == pure.records
    assert warm.records[len(pure.records)].epoch_start_norms is not None


def test_separate_warm_schedule_restarts_counters():
    m = SyntheticAnchorLoss(np.random.default_rng(9).uniform(-10, 10, (4, 2)))
    r = train(m, np.zeros(2), TrainConfig("full_ordering", OrderingStrategy("decreasing"),
                                          StepSchedule("per_iteration", 1e-4), 3, warm_start_epochs=2,
                                          warm_start_schedule=StepSchedule("constant", 1e-6)))
    assert [rec.step_size for rec in r.records[:8]] == [1e-6] * 8
    assert [rec.step_size for rec in r.records[8:]] == [1e-4 / (t + 1) for t in range(4)]


def test_trace_matches_independent_recomputation():
    rng = np.random.default_rng(10)
    d = rng.uniform(-10, 10, (6, 2))
    r = train(SyntheticAnchorLoss(d), np.zeros(2), cfg("full_ordering", "random", ("per_iteration", 1e-4), epochs=3))
    x = np.zeros(2)
    for rec in r.records:
        (i,) = rec.indices
        u = x - d[i]
        x = x - rec.step_size * (4 * u**3 + 2 * u)
        expected = sum(float(np.sum((x - di) ** 4 + (x - di) ** 2)) for di in d) / len(d)
        assert abs(rec.loss - expected) <= 1e-12 * max(1.0, abs(expected))
    iters = [rec.iteration for rec in r.records]
    assert iters == sorted(set(iters))


def test_determinism():
    m = SyntheticAnchorLoss(np.random.default_rng(11).uniform(-10, 10, (6, 2)))
    c = cfg("data_selection", "random", ("per_iteration", 1e-4), epochs=4, batch_size=4, select_count=2)
    assert train(m, np.zeros(2), c).records == train(m, np.zeros(2), c).records


def test_divergence_is_reported():
    m = SyntheticAnchorLoss([[10.0, 10.0], [-10.0, -10.0]])
    with pytest.raises(DivergenceError) as info:
        train(m, np.zeros(2), cfg("full_ordering", sched=("constant", 10.0), epochs=5))
    assert f"epoch {info.value.epoch}, iteration {info.value.iteration}" in str(info.value)
    assert len(info.value.records) == info.value.iteration
    assert all(np.isfinite(rec.loss) for rec in info.value.records)


def test_wrapper_checks_algorithm():
    m = Quadratic([[0.0]])
    with pytest.raises(ValueError):
        train_data_selection(m, [0.0], cfg("full_ordering"))


def test_batch_size_above_n():
    with pytest.raises(ValueError):
        train(Quadratic([[0.0], [1.0]]), [0.0], cfg("sort_before_minibatch", batch_size=3))


def test_balanced_batches_counts():
    labels = np.array([0, 1, 2] * 4)
    batches = balanced_batches(np.arange(12)[::-1], labels, 6)
    for b in batches:
        assert sorted(np.bincount(labels[b], minlength=3).tolist()) == [2, 2, 2]
    assert balanced_batches(np.arange(5), None, 2, n_batches=2)[1].tolist() == [2, 3]
