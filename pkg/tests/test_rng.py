import numpy as np
import pytest
from scipy import stats

from affinitynet.rng import CounterRNG


def test_same_seed_same_stream():
    a, b = CounterRNG(3, "x"), CounterRNG(3, "x")
    assert np.array_equal(a.normal(100), b.normal(100))
    assert not np.array_equal(CounterRNG(3, "x").normal(10), CounterRNG(4, "x").normal(10))
    assert not np.array_equal(CounterRNG(3, "x").normal(10), CounterRNG(3, "y").normal(10))


def test_draws_are_counter_based():
    # two draws of 5 equal one draw of 10
    a = CounterRNG(1)
    first = np.concatenate([a.uniform(5), a.uniform(5)])
    assert np.array_equal(first, CounterRNG(1).uniform(10))


def test_ranges():
    r = CounterRNG(0)
    u = r.uniform(10_000)
    assert (u > 0).all() and (u < 1).all()
    ints = r.integers(-3, 4, 5000)
    assert ints.min() == -3 and ints.max() == 3
    perm = r.permutation(50)
    assert sorted(perm.tolist()) == list(range(50))
    pick = r.choice(20, 7)
    assert len(set(pick.tolist())) == 7 and pick.max() < 20


def test_scalar_draws():
    r = CounterRNG(9)
    assert isinstance(r.uniform(), float) and isinstance(r.normal(), float)
    assert isinstance(r.integers(0, 5), int)


def test_distributions_pass_ks():
    r = CounterRNG(11)
    assert stats.kstest(r.uniform(20_000), "uniform").pvalue > 1e-3
    assert stats.kstest(r.normal(20_000), "norm").pvalue > 1e-3
    z = r.normal(20_000, loc=2.5, scale=3.0)
    assert z.mean() == pytest.approx(2.5, abs=0.1) and z.std() == pytest.approx(3.0, abs=0.1)


def test_spawn_is_independent_and_leaves_parent():
    parent = CounterRNG(5)
    before = parent.counter
    a, b = parent.spawn("a"), parent.spawn("b")
    assert parent.counter == before
    x, y = a.normal(5000), b.normal(5000)
    assert abs(np.corrcoef(x, y)[0, 1]) < 0.05
    assert np.array_equal(CounterRNG(5).spawn("a").normal(5000), x)
