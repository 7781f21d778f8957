import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from cmvjump.errors import InputError
from cmvjump.measures import (
    EmpiricalMeasure,
    MeasurePath,
    dirac,
    product_coupling_bound,
    w2_1d,
    w2_between,
    w2_exact,
    w2_sliced,
    w2_sq_quantile,
    w2_to_dirac,
)

from helpers import mean_se, within


def brute_w2(x, y):
    n = x.shape[0]
    best = min(sum(np.sum((x[i] - y[p[i]]) ** 2) for i in range(n)) for p in itertools.permutations(range(n)))
    return math.sqrt(best / n)


def test_empirical_measure_stats():
    mu = EmpiricalMeasure([[1.0, 0.0], [3.0, 2.0]])
    assert np.allclose(mu.mean, [2.0, 1.0])
    assert mu.var == pytest.approx(2.0)  # total variance 1 + 1
    assert np.allclose(mu.cov(), [[1.0, 1.0], [1.0, 1.0]])
    assert mu.second_moment() == pytest.approx((1 + 9 + 4) / 2)
    assert EmpiricalMeasure([-1.0, 1.0]).var == pytest.approx(1.0)


def test_empirical_measure_rejects_bad_atoms():
    with pytest.raises(InputError):
        EmpiricalMeasure(np.zeros((0, 1)))
    with pytest.raises(InputError):
        EmpiricalMeasure([0.0, np.nan])


def test_w2_to_dirac_examples():
    assert w2_to_dirac(EmpiricalMeasure([1.0, -1.0]), [0.0]) == pytest.approx(1.0)
    assert w2_to_dirac(dirac([2.0, 3.0], n=4), [2.0, 3.0]) == 0.0
    assert w2_to_dirac(EmpiricalMeasure([0.0, 3.0]), [0.0]) == pytest.approx(math.sqrt(4.5), abs=1e-12)


def test_w2_1d_examples():
    assert w2_1d([1.0, 2.0, 5.0], [5.0, 1.0, 2.0]) == 0.0
    assert w2_1d([0.0], [3.0]) == 3.0
    assert w2_1d([0.0, 1.0], [1.0, 0.0]) == 0.0


def test_w2_1d_errors():
    with pytest.raises(InputError):
        w2_1d([0.0, 1.0], [0.0])
    with pytest.raises(InputError):
        w2_1d(np.zeros((2, 2)), np.zeros((2, 2)))


def test_w2_exact_examples():
    a = np.array([[0.0, 0.0], [1.0, 1.0]])
    assert w2_exact(a, a[::-1]) == 0.0
    x = np.array([[0, 0], [2, 0], [0, 2]], dtype=float)
    y = np.array([[1, 0], [0, 1], [2, 2]], dtype=float)
    assert abs(w2_exact(x, y) - brute_w2(x, y)) <= 1e-9


def test_w2_exact_cap():
    x = np.zeros((20, 1))
    with pytest.raises(InputError, match="w2_sliced"):
        w2_exact(x, x, cap=10)
    with pytest.raises(InputError):
        w2_exact(np.zeros((3, 1)), np.zeros((4, 1)))


def test_w2_sliced_examples():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(50, 2))
    assert w2_sliced(x, x, 10, rng) == 0.0
    a = rng.normal(size=(30, 1))
    b = rng.normal(size=(30, 1))
    assert w2_sliced(a, b, 1, rng) == pytest.approx(w2_1d(a, b), rel=1e-12)


def test_w2_sliced_translation():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(40, 2))
    v = np.array([3.0, -4.0])
    vals = []
    for _ in range(400):
        s = w2_sliced(x, x + v, 1, rng)
        assert s <= np.linalg.norm(v) + 1e-12
        vals.append(s**2)
    # E <u, e>^2 = 1/d for a uniform direction in R^d
    m, se = mean_se(vals)
    assert within(m, np.linalg.norm(v) ** 2 / 2, se)


def test_product_coupling_examples():
    assert product_coupling_bound([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert product_coupling_bound([0.0, 0.0], [1.0, 1.0]) == 1.0
    with pytest.raises(InputError):
        product_coupling_bound([0.0], [0.0, 1.0])


def test_product_coupling_dominates_exact():
    rng = np.random.default_rng(2)
    for _ in range(1000):
        n, d = rng.integers(1, 8), rng.integers(1, 4)
        x, y = rng.normal(size=(n, d)), rng.normal(size=(n, d))
        assert product_coupling_bound(x, y) >= w2_exact(x, y) - 1e-12


def test_w2_exact_matches_brute_force():
    rng = np.random.default_rng(3)
    for _ in range(300):
        n, d = rng.integers(1, 7), rng.integers(1, 4)
        x, y = rng.normal(size=(n, d)), rng.normal(size=(n, d))
        assert abs(w2_exact(x, y) - brute_w2(x, y)) <= 1e-9


def _cloud(n, d):
    return arrays(np.float64, (n, d), elements=st.floats(-100, 100, allow_nan=False, width=64))


@settings(max_examples=150, deadline=None)
@given(st.data())
def test_w2_metric_axioms(data):
    n = data.draw(st.integers(1, 6))
    d = data.draw(st.integers(1, 3))
    x, y, z = (data.draw(_cloud(n, d)) for _ in range(3))
    assert w2_exact(x, y) == w2_exact(y, x)
    assert w2_exact(x, x[::-1]) <= 1e-9
    assert w2_exact(x, z) <= w2_exact(x, y) + w2_exact(y, z) + 1e-9


@settings(max_examples=150, deadline=None)
@given(st.data())
def test_w2_1d_equals_exact(data):
    n = data.draw(st.integers(1, 12))
    x, y = data.draw(_cloud(n, 1)), data.draw(_cloud(n, 1))
    assert abs(w2_1d(x, y) - w2_exact(x, y)) <= 1e-9 * max(1.0, w2_1d(x, y))


@settings(max_examples=100, deadline=None)
@given(st.data())
def test_w2_exact_to_expanded_dirac(data):
    n = data.draw(st.integers(1, 10))
    d = data.draw(st.integers(1, 3))
    x = data.draw(_cloud(n, d))
    x0 = data.draw(arrays(np.float64, (d,), elements=st.floats(-100, 100, allow_nan=False)))
    assert math.isclose(w2_exact(x, np.tile(x0, (n, 1))), w2_to_dirac(x, x0), rel_tol=1e-12, abs_tol=1e-12)


@settings(max_examples=80, deadline=None)
@given(st.integers(1, 9), st.integers(1, 9), st.integers(0, 2**32 - 1))
def test_quantile_formula_matches_replicated_assignment(n, m, seed):
    rng = np.random.default_rng(seed)
    x, y = rng.normal(size=n), rng.normal(size=m)
    lcm = n * m // math.gcd(n, m)
    expected = w2_exact(np.repeat(x, lcm // n)[:, None], np.repeat(y, lcm // m)[:, None]) ** 2
    got = float(w2_sq_quantile(np.sort(x), np.sort(y)))
    assert math.isclose(got, expected, rel_tol=1e-9, abs_tol=1e-12)


def test_quantile_formula_broadcasts_over_time():
    rng = np.random.default_rng(4)
    x = np.sort(rng.normal(size=(5, 4)), axis=1)
    y = np.sort(rng.normal(size=(5, 6)), axis=1)
    batch = w2_sq_quantile(x, y)
    assert np.allclose(batch, [w2_sq_quantile(a, b) for a, b in zip(x, y)])


def test_w2_between_unequal_sizes():
    rng = np.random.default_rng(5)
    x, y = rng.normal(size=(4, 2)), rng.normal(size=(6, 2))
    expected = w2_exact(np.repeat(x, 3, axis=0), np.repeat(y, 2, axis=0))
    assert w2_between(x, y) == pytest.approx(expected, rel=1e-12)
    big = rng.normal(size=(600, 2))
    with pytest.raises(InputError):
        w2_between(x[:3], big, cap=64)
    v1 = w2_between(x[:3], big, rng=np.random.default_rng(9), cap=64)
    v2 = w2_between(x[:3], big, rng=np.random.default_rng(9), cap=64)
    assert v1 == v2


def test_measure_path_left_limits():
    grid = [0.0, 0.5, 1.0]
    states = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]])
    pre = {1: np.array([[0.4], [0.4]])}
    mp = MeasurePath(grid, states, pre)
    assert mp.value_at(0.7).mean[0] == 1.0
    assert mp.left_limit(0.5).mean[0] == 0.4  # jump at 0.5
    assert mp.value_at(0.5).mean[0] == 1.0
    assert mp.left_limit(1.0).mean[0] == 2.0  # no jump recorded there
    assert mp.left_limit(0.25).mean[0] == 0.0
    with pytest.raises(InputError):
        mp.value_at(-0.1)


def test_measure_path_validation():
    with pytest.raises(InputError):
        MeasurePath([0.1, 0.2], np.zeros((2, 1)))
    with pytest.raises(InputError):
        MeasurePath([0.0, 0.0], np.zeros((2, 1)))
    with pytest.raises(InputError):
        MeasurePath([0.0, 1.0], np.zeros((3, 1)))
    c = MeasurePath.constant(dirac([0.0]))
    assert c.value_at(123.0).var == 0.0
