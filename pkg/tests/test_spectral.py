import cmath
import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import sl2_matrices, torus_points
from toruslab.algebra import TorusPoint, torus_distance
from toruslab.errors import FrequencyNotDivisible
from toruslab.specs import std_sl2, trapped_q3
from toruslab.spectral import (
    decay_scan,
    fourier_coefficient,
    granule_detect,
    mu0k_convolution_bound_check,
    rate_dichotomy_check,
    trapping_lowerbound_check,
    weyl_scan,
)
from toruslab.walk import EmpiricalSample, FiniteMeasure, WalkSpec, exact_pushforward

F = Fraction


def pt(*c):
    return TorusPoint.exact_point(c)


def lattice(k):
    return FiniteMeasure.uniform([pt(F(i, k), F(j, k)) for i in range(k) for j in range(k)])


def direct_coefficient(nu, a):
    """Oracle: plain complex sum over atoms."""
    return sum(float(w) * cmath.exp(2j * math.pi * sum(ai * float(c) for ai, c in zip(a, p.coords)))
               for p, w in zip(nu.points, nu.weights))


def uniform_sample(seed, N):
    pts = np.random.default_rng(seed).random((N, 2))
    return EmpiricalSample(pts, 0, N, seed, "uniform")


def test_fourier_examples():
    assert fourier_coefficient(FiniteMeasure.dirac(pt(0, 0)), (5, -2)) == 1
    two = FiniteMeasure.uniform([pt(0, 0), pt(F(1, 2), 0)])
    assert abs(fourier_coefficient(two, (1, 0))) <= 1e-15
    assert fourier_coefficient(two, (2, 0)) == pytest.approx(1)
    lat = lattice(3)
    assert abs(fourier_coefficient(lat, (1, 0))) <= 1e-12
    assert fourier_coefficient(lat, (3, 0)) == pytest.approx(1)


def test_weyl_examples():
    tab = weyl_scan(FiniteMeasure.dirac(pt(0, 0)), 2)
    assert tab.max_modulus == pytest.approx(1) and all(v == pytest.approx(1) for v in tab.table.values())
    tab = weyl_scan(lattice(3), 3)
    for a, v in tab.table.items():
        expected = 1.0 if all(c % 3 == 0 for c in a) else 0.0
        assert v == pytest.approx(expected, abs=1e-12)
    assert len(tab.table) == 7**2 - 1


def test_weyl_uniform_sample_is_small():
    for seed in range(20):
        assert weyl_scan(uniform_sample(seed, 100_000), 3).max_modulus <= 0.02


def test_decay_scan_examples():
    spec, x = trapped_q3()
    rep = decay_scan(spec, x, (3, 0), list(range(0, 21)))
    assert rep.metadata["method"] == "exact"
    assert np.max(np.abs(rep.values - 1)) <= 1e-12
    g = TorusPoint.approx_point([math.sqrt(2) % 1, math.sqrt(3) % 1])
    for seed in range(5):
        rep = decay_scan(std_sl2(), g, (1, 0), [0, 60], 100_000, seed)
        assert rep.value_at(0) == 1.0 and rep.value_at(60) < 0.05


def test_rate_dichotomy_examples():
    spec, x = trapped_q3()
    v = rate_dichotomy_check(spec, x, (3, 0), t=0.45, n=10, C=1.0, lam=1.0)
    assert v.horn_i and v.horn_ii and v.distance_bound == 0 and v.verdict == "CONSISTENT"
    g = TorusPoint.approx_point([math.sqrt(2) % 1, math.sqrt(3) % 1])
    v = rate_dichotomy_check(std_sl2(), g, (1, 0), t=0.3, n=60, C=1.0, lam=0.1, N=20_000)
    assert not v.horn_i and v.verdict == "CONSISTENT"
    near = TorusPoint.approx_point([1 / 3 + 1e-8, 2 / 3])
    v = rate_dichotomy_check(spec, near, (3, 0), t=0.3, n=5, C=1.0, lam=1.0)
    assert v.horn_i and v.horn_ii and v.verdict == "CONSISTENT" and v.distance_bound <= 2e-8


def test_rate_dichotomy_rejects_bad_t():
    spec, x = trapped_q3()
    with pytest.raises(ValueError):
        rate_dichotomy_check(spec, x, (3, 0), t=0.9, n=5, C=1.0, lam=1.0)


def test_trapping_examples():
    spec, x = trapped_q3()
    tr = trapping_lowerbound_check(spec, x, 3, (3, 0), list(range(0, 21)))
    assert tr.status == "exact-trap" and tr.lower_bound_holds
    pert = TorusPoint.approx_point([1 / 3 + 1e-6, 2 / 3])
    crossings = []
    for seed in range(5):
        tr = trapping_lowerbound_check(spec, pert, 3, (3, 0), list(range(0, 61)), 10_000, seed)
        assert np.all(tr.report.values[:21] >= 0.99)
        assert tr.status == "fitted" and tr.lower_bound_holds and tr.c_hat > 0
        crossings.append(tr.crossover_n)
    assert max(crossings) - min(crossings) <= 3
    with pytest.raises(FrequencyNotDivisible):
        trapping_lowerbound_check(spec, x, 3, (1, 0), [0, 1])


def test_crossover_moves_later_for_smaller_perturbation():
    spec = std_sl2()
    ns = list(range(0, 81))
    cross = []
    for delta in (1e-3, 1e-6, 1e-9):
        x = TorusPoint.approx_point([1 / 3 + delta, 2 / 3])
        cross.append(trapping_lowerbound_check(spec, x, 3, (3, 0), ns, 5000, 0).crossover_n)
    assert cross[0] < cross[1] < cross[2]


def test_mu0k_examples():
    single = WalkSpec.build(["a"], ["1"], [[[1, 1], [0, 1]]], [["1/3", "0"]])
    eta = FiniteMeasure.uniform([pt(F(1, 5), F(2, 7)), pt(F(1, 2), 0)])
    res = mu0k_convolution_bound_check(single, eta, (1, 0), 1)
    assert res.rhs == pytest.approx(1.0) and res.holds
    res = mu0k_convolution_bound_check(std_sl2([["1/2", "0"], ["0", "1/3"]]), FiniteMeasure.dirac(pt(F(1, 7), 0)), (2, 1), 1)
    assert res.rhs == pytest.approx(1.0) and res.holds


def direct_rhs(spec, eta, a, k):
    """Oracle: sum over all 2k-tuples without grouping."""
    mats = [np.array(m.rows, dtype=float) for m in spec.matrices]
    total = 0.0
    for combo in itertools.product(range(spec.size), repeat=2 * k):
        S = sum(mats[i] for i in combo[:k]) - sum(mats[i] for i in combo[k:])
        w = math.prod(float(spec.weights[i]) for i in combo)
        freq = tuple(int(round(v)) for v in S.T @ np.array(a, float))
        total += w * abs(direct_coefficient(eta, freq))
    return total


def test_mu0k_against_direct_summation():
    rng = np.random.default_rng(3)
    spec = std_sl2([["1/2", "1/3"], ["1/5", "0"]])
    eta = FiniteMeasure.uniform([pt(F(int(rng.integers(0, 9)), 9), F(int(rng.integers(0, 7)), 7)) for _ in range(4)])
    res = mu0k_convolution_bound_check(spec, eta, (1, 0), 2)
    lhs = abs(direct_coefficient(exact_pushforward(spec, eta, 1), (1, 0))) ** 4
    assert res.lhs == pytest.approx(lhs, abs=1e-12)
    assert res.rhs == pytest.approx(direct_rhs(spec, eta, (1, 0), 2), abs=1e-12)
    assert res.holds and res.A_holds


@st.composite
def small_instances(draw):
    k = draw(st.integers(1, 3))
    mats = [draw(sl2_matrices()).tolist() for _ in range(k)]
    trans = [draw(torus_points(max_den=9)) for _ in range(k)]
    spec = WalkSpec.build([f"w{i}" for i in range(k)], [F(1, k)] * k, mats, trans)
    eta = FiniteMeasure.uniform(draw(st.lists(torus_points(max_den=9), min_size=1, max_size=6, unique=True)))
    a = draw(st.tuples(st.integers(-3, 3), st.integers(-3, 3)).filter(any))
    return spec, eta, a, draw(st.integers(1, 2))


@given(small_instances())
def test_mu0k_bound_always_holds(inst):
    spec, eta, a, k = inst
    res = mu0k_convolution_bound_check(spec, eta, a, k)
    assert res.lhs <= res.rhs + 1e-9 and res.A_holds


@given(small_instances())
def test_pushforward_fourier_relation(inst):
    spec, eta, a, _ = inst
    lhs = fourier_coefficient(exact_pushforward(spec, eta, 1), a)
    rhs = 0
    for m, u, w in zip(spec.matrices, spec.translations, spec.weights):
        ga = tuple(sum(m.rows[i][j] * a[i] for i in range(2)) for j in range(2))
        phase = cmath.exp(2j * math.pi * sum(ai * float(c) for ai, c in zip(a, u.coords)))
        rhs += float(w) * phase * direct_coefficient(eta, ga)
    assert abs(lhs - rhs) <= 1e-10
    assert abs(fourier_coefficient(eta, a)) <= 1 + 1e-12


def test_granule_examples():
    one = FiniteMeasure.dirac(TorusPoint.approx_point([0.3, 0.7]))
    res = granule_detect(one, 0.2, 0.05, 0.5)
    assert res is not None and res.mass == pytest.approx(1) and np.allclose(res.centers, [[0.3, 0.7]])
    assert granule_detect(uniform_sample(0, 20_000), 0.2, 0.01, 0.5) is None
    rng = np.random.default_rng(1)
    pts = np.vstack([0.2 + 0.005 * rng.standard_normal((500, 2)), np.array([0.6, 0.2]) + 0.005 * rng.standard_normal((500, 2))])
    res = granule_detect(EmpiricalSample(np.mod(pts, 1), 0, 1000, 1, "two"), 0.3, 0.05, 0.5)
    assert res is not None and len(res.centers) == 2 and res.mass >= 0.99


@settings(max_examples=30)
@given(st.integers(0, 10**6), st.sampled_from([0.1, 0.2, 0.3]))
def test_granule_centers_are_separated(seed, r):
    rng = np.random.default_rng(seed)
    c = rng.random((4, 2))
    pts = np.mod(c[rng.integers(0, 4, 400)] + 0.03 * rng.standard_normal((400, 2)), 1)
    res = granule_detect(EmpiricalSample(pts, 0, 400, seed, "t"), r, r / 4, 0.0)
    C = [TorusPoint.approx_point(v) for v in res.centers]
    for p, q in itertools.combinations(C, 2):
        assert torus_distance(p, q) >= r
