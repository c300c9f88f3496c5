import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import sl2_matrices, torus_points
from toruslab.algebra import TorusPoint
from toruslab.errors import DeterminantNotOne, SupportCapExceeded, WeightsInvalid
from toruslab.orbits import orbit_closure
from toruslab.specs import std_sl2, trapped_q3
from toruslab.walk import (
    FiniteMeasure,
    WalkSpec,
    counter_uniforms,
    estimate_lyapunov,
    exact_pushforward,
    monte_carlo_measure,
    sample_endpoint,
    simulate_points,
    validate_spec,
)

F = Fraction
UPPER, LOWER = [[1, 1], [0, 1]], [[1, 0], [1, 1]]


def test_validate_examples():
    assert validate_spec(std_sl2()).size == 2
    with pytest.raises(DeterminantNotOne):
        WalkSpec.build(["a"], ["1"], [[[2, 0], [0, 1]]])
    with pytest.raises(WeightsInvalid):
        WalkSpec.build(["a", "b"], ["1/2", "1/3"], [UPPER, LOWER])


def test_sample_endpoint_examples():
    spec, x = trapped_q3()
    assert sample_endpoint(spec, x, 0, seed=1) == x
    shift = WalkSpec.build(["a"], ["1"], [[[1, 0], [0, 1]]], [["1/4", "0"]])
    assert sample_endpoint(shift, TorusPoint.zero(2), 2, seed=0) == TorusPoint.exact_point([F(1, 2), 0])
    orbit = set(orbit_closure(spec, x).orbit_points)
    for seed in range(10):
        y = sample_endpoint(spec, x, 5, seed)
        assert y in orbit and all((3 * c).denominator == 1 for c in y.coords)


def test_exact_pushforward_examples():
    spec, x = trapped_q3()
    nu = FiniteMeasure.dirac(x)
    assert exact_pushforward(spec, nu, 0).as_dict() == nu.as_dict()
    orbit = set(orbit_closure(spec, x).orbit_points)
    for n in (1, 3, 7):
        mu = exact_pushforward(spec, nu, n)
        assert mu.total_mass == 1 and set(mu.points) <= orbit
    cat = WalkSpec.build(["a"], ["1"], [[[2, 1], [1, 1]]], [["1/2", "0"]])
    y = x
    for _ in range(4):
        y = cat.generator("a")(y)
    assert exact_pushforward(cat, nu, 4).as_dict() == {y.coords: 1}


def test_float_pushforward_merges_and_respects_cap():
    spec = std_sl2()
    fl = exact_pushforward(spec, FiniteMeasure.dirac(TorusPoint.approx_point([1 / 3, 2 / 3])), 6)
    ex = exact_pushforward(spec, FiniteMeasure.dirac(TorusPoint.exact_point(["1/3", "2/3"])), 6)
    assert fl.support_size == ex.support_size
    assert fl.total_mass == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(SupportCapExceeded):
        exact_pushforward(spec, FiniteMeasure.dirac(TorusPoint.exact_point(["1/101", "3/101"])), 12, support_cap=50)


@given(torus_points(max_den=7), st.integers(0, 4), st.integers(0, 4))
def test_pushforward_mass_and_semigroup(x, k, m):
    spec = WalkSpec.build(["a", "b", "c"], ["1/2", "1/3", "1/6"], [UPPER, LOWER, [[2, 1], [1, 1]]],
                          [["1/2", "0"], ["0", "1/3"], ["0", "0"]])
    nu = FiniteMeasure.dirac(x)
    whole = exact_pushforward(spec, nu, k + m)
    split = exact_pushforward(spec, exact_pushforward(spec, nu, k), m)
    assert whole.total_mass == 1
    assert whole.as_dict() == split.as_dict()


def test_empirical_law_converges_to_exact_law():
    spec, x = trapped_q3()
    n, N = 6, 4000
    exact = exact_pushforward(spec, FiniteMeasure.dirac(x), n).as_dict()
    for seed in range(20):
        pts = simulate_points(spec, x.as_array(), n, N, seed)
        keys = [tuple(F(int(round(3 * c)) % 3, 3) for c in p) for p in pts]
        emp = {}
        for k in keys:
            emp[k] = emp.get(k, 0) + 1 / N
        support = set(emp) | set(exact)
        tv = 0.5 * sum(abs(emp.get(k, 0) - float(exact.get(k, 0))) for k in support)
        assert tv <= 4 / math.sqrt(N)


def test_same_seed_is_bitwise_reproducible():
    spec = std_sl2()
    x = TorusPoint.approx_point([math.sqrt(2) % 1, math.sqrt(3) % 1])
    a = monte_carlo_measure(spec, x, 30, 500, seed=9).points_array()
    b = monte_carlo_measure(spec, x, 30, 500, seed=9).points_array()
    c = monte_carlo_measure(spec, x, 30, 500, seed=10).points_array()
    assert a.tobytes() == b.tobytes() and a.tobytes() != c.tobytes()


def test_counter_uniforms_depend_only_on_key():
    chains = np.arange(10, dtype=np.uint64)
    full = counter_uniforms(3, chains, 7)
    part = counter_uniforms(3, chains[5:], 7)
    assert np.array_equal(full[5:], part)
    assert np.all((full >= 0) & (full < 1))


@pytest.mark.parametrize("rows", [[[2, 1], [1, 1]], [[3, 1], [2, 1]], [[5, 2], [2, 1]]])
def test_lyapunov_single_matrix_oracle(rows):
    spec = WalkSpec.build(["A"], ["1"], [rows])
    radius = max(abs(np.linalg.eigvals(np.array(rows, float))))
    est = estimate_lyapunov(spec, 10_000, 8, seed=0)
    assert abs(est.lambda1_hat - math.log(radius)) <= 1e-3


def test_lyapunov_identity_and_std_sl2():
    ident = WalkSpec.build(["A"], ["1"], [[[1, 0], [0, 1]]])
    assert estimate_lyapunov(ident, 100, 4, seed=0).lambda1_hat == pytest.approx(0, abs=1e-12)
    ests = [estimate_lyapunov(std_sl2(), 2000, 64, seed=s) for s in range(3)]
    assert all(e.lambda1_hat > 0 for e in ests)
    for e, f in zip(ests, ests[1:]):
        assert abs(e.lambda1_hat - f.lambda1_hat) <= 3 * math.hypot(e.standard_error, f.standard_error)
