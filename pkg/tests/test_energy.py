import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import torus_points
from toruslab.algebra import TorusPoint, torus_distance
from toruslab.energy import (
    EnergyParams,
    alpha_energy,
    calibrate_C2,
    checkerboard_decompose,
    diagonal_mass,
    fit_contraction,
    margulis_inequality_check,
    max_ball_mass,
    pair_estimates,
    tiles_per_axis,
)
from toruslab.errors import ZeroMass
from toruslab.specs import std_sl2
from toruslab.walk import EmpiricalSample, FiniteMeasure, WalkSpec

F = Fraction


def pt(*c):
    return TorusPoint.exact_point(c)


def lattice(k):
    return FiniteMeasure.uniform([pt(F(i, k), F(j, k)) for i in range(k) for j in range(k)])


def brute_energy(nu, alpha):
    """Oracle: double loop over atoms with scalar distances."""
    total = 0.0
    for (p, w), (q, v) in itertools.permutations(zip(nu.points, nu.weights), 2):
        total += float(w) * float(v) * torus_distance(p, q) ** (-alpha)
    return total


def test_energy_params_validation():
    EnergyParams(0.1, 0.2)
    with pytest.raises(ValueError):
        EnergyParams(0.0, 0.2)
    with pytest.raises(ValueError):
        EnergyParams(0.1, -1)


def test_alpha_energy_examples():
    assert alpha_energy(FiniteMeasure.dirac(pt(F(1, 3), 0)), 0.5) == 0
    two = FiniteMeasure.uniform([pt(0, 0), pt(F(1, 2), 0)])
    for alpha in (0.1, 1.0, 1.7):
        assert alpha_energy(two, alpha) == pytest.approx(2 ** (alpha - 1), rel=1e-12)
    lat = lattice(3)
    assert alpha_energy(lat, 1.0) == pytest.approx(brute_energy(lat, 1.0), abs=1e-12)
    with pytest.raises(ValueError):
        alpha_energy(lat, 0)


def test_alpha_energy_chunking_is_consistent():
    rng = np.random.default_rng(0)
    nu = FiniteMeasure.from_arrays(rng.random((300, 2)))
    assert alpha_energy(nu, 0.7, chunk=17) == pytest.approx(alpha_energy(nu, 0.7), rel=1e-12)


@settings(max_examples=40)
@given(st.lists(torus_points(max_den=12), min_size=2, max_size=8, unique=True), st.floats(0.05, 1.5), st.floats(0.05, 1.5))
def test_alpha_energy_monotone_in_alpha(points, a1, a2):
    nu = FiniteMeasure.uniform(points)
    lo, hi = sorted((a1, a2))
    assert alpha_energy(nu, lo) <= alpha_energy(nu, hi) + 1e-12
    assert alpha_energy(nu, lo) == pytest.approx(brute_energy(nu, lo), rel=1e-10)


def test_diagonal_mass_examples():
    assert diagonal_mass(FiniteMeasure.dirac(pt(0, 0))) == 1
    assert diagonal_mass(lattice(2)) == F(1, 4)
    nu = FiniteMeasure.from_atoms([(pt(0, 0), F(1, 2)), (pt(F(1, 2), 0), F(1, 3)), (pt(0, F(1, 2)), F(1, 6))])
    assert diagonal_mass(nu) == F(14, 36)
    merged = FiniteMeasure.from_atoms([(pt(0, 0), F(1, 2)), (pt(1, 1), F(1, 2))])
    assert diagonal_mass(merged) == 1


@given(st.lists(torus_points(max_den=12), min_size=1, max_size=8, unique=True))
def test_diagonal_mass_at_most_one(points):
    d = diagonal_mass(FiniteMeasure.uniform(points))
    assert d <= 1 and (d == 1) == (len(points) == 1)


def brute_ball(pts, ws, rho):
    """Oracle: every atom as center, full distance matrix."""
    diff = np.abs(pts[:, None, :] - pts[None, :, :])
    diff = np.minimum(diff, 1 - diff)
    dist = np.sqrt((diff**2).sum(-1))
    return float(((dist <= rho) * ws[None, :]).sum(1).max())


def test_max_ball_mass_examples():
    x = pt(F(1, 5), F(4, 5))
    for rho in (0.01, 0.3, 1.0):
        res = max_ball_mass(FiniteMeasure.dirac(x), rho)
        assert res.mass == pytest.approx(1) and np.allclose(res.center, [0.2, 0.8])
    res = max_ball_mass(lattice(3), 0.1)
    assert res.mass == pytest.approx(1 / 9) and res.upper >= res.mass
    rng = np.random.default_rng(2)
    pts = np.vstack([np.array([0.3, 0.3]) + 1e-4 * rng.standard_normal((700, 2)), rng.random((300, 2))])
    res = max_ball_mass(EmpiricalSample(np.mod(pts, 1), 0, 1000, 2, "c"), 0.01)
    assert 0.7 <= res.mass <= 0.71 and np.allclose(res.center, [0.3, 0.3], atol=1e-3)
    with pytest.raises(ValueError):
        max_ball_mass(lattice(3), 0)


@settings(max_examples=40)
@given(st.integers(0, 10**6), st.sampled_from([0.02, 0.1, 0.25, 0.6]), st.booleans())
def test_max_ball_mass_matches_brute_force(seed, rho, weighted):
    rng = np.random.default_rng(seed)
    pts = rng.random((200, 2))
    pts[100:] = pts[:100] + 0.01 * rng.standard_normal((100, 2))
    pts = np.mod(pts, 1)
    ws = rng.random(200) if weighted else np.ones(200)
    ws /= ws.sum()
    res = max_ball_mass(FiniteMeasure.from_arrays(pts, ws), rho)
    assert res.mass == pytest.approx(brute_ball(pts, ws, rho), abs=1e-12)
    assert res.upper >= res.mass - 1e-12


def test_full_ball_has_mass_one():
    rng = np.random.default_rng(0)
    nu = FiniteMeasure.from_arrays(rng.random((50, 2)))
    assert max_ball_mass(nu, math.sqrt(2) / 2).mass == pytest.approx(1)


def test_fit_contraction_isometry():
    spec = WalkSpec.build(["a", "b"], ["1/2", "1/2"], [[[1, 0], [0, 1]]] * 2, [["1/3", "0"], ["0", "1/7"]])
    fit = fit_contraction(spec, 0.3, 5, N_pairs=200, N_walk=50, seed=1)
    assert fit.a_hat == pytest.approx(1, abs=1e-9) and fit.C_hat <= 1e-9 and not fit.contracting


def test_fit_contraction_std_sl2_contracts():
    a_vals = [fit_contraction(std_sl2(), 0.05, 20, N_pairs=300, N_walk=400, seed=s).a_hat for s in range(3)]
    assert all(a < 1 for a in a_vals)
    assert max(a_vals) - min(a_vals) < 0.1
    assert all(v >= 0 for v in a_vals)


def test_hyperbolic_single_pair_ratio():
    A = [[2, 1], [1, 1]]
    spec = WalkSpec.build(["A"], ["1"], [A])
    lam, vecs = np.linalg.eigh(np.array(A, float))
    v = vecs[:, np.argmax(lam)]
    alpha, m = 0.2, 3
    diff = (1e-6 * v)[None, :]
    est, linear = pair_estimates(spec, diff, alpha, m, 10, 0)
    ratio = est[0] / np.linalg.norm(diff) ** (-alpha)
    assert linear[0] and ratio == pytest.approx(lam.max() ** (-alpha * m), rel=1e-8)


def test_margulis_examples():
    spec = std_sl2()
    rec = margulis_inequality_check(spec, FiniteMeasure.dirac(pt(F(1, 7), F(3, 7))), 0.1, 0.1, 3, 0.05, 0.0)
    assert rec.diag == 1 and rec.holds and rec.method == "exact"
    lat = lattice(3)
    cases = [(spec, lat, rho) for rho in (0.02, 0.05, 0.1)]
    C2 = calibrate_C2(cases, 0.1, 0.1, 2)
    for _, nu, rho in cases:
        rec = margulis_inequality_check(spec, nu, 0.1, 0.1, 2, rho, C2)
        assert rec.holds and rec.slack >= -1e-12
    full = margulis_inequality_check(spec, lat, 0.1, 0.1, 2, math.sqrt(2) / 2, C2)
    assert full.lhs == pytest.approx(1) and full.holds
    with pytest.raises(ValueError):
        margulis_inequality_check(spec, lat, 0.1, 0.1, 0, 0.1, 0.0)


def test_calibration_covers_full_mass_ball():
    spec = std_sl2()
    nu = FiniteMeasure.uniform([pt(F(1, 7), 0), pt(F(3, 7), F(1, 2))])
    C2 = calibrate_C2([(spec, nu, math.sqrt(2) / 2)], 0.5, 0.1, 1)
    assert C2 >= 0
    assert margulis_inequality_check(spec, nu, 0.5, 0.1, 1, math.sqrt(2) / 2, C2).holds


def test_tiles_per_axis():
    assert tiles_per_axis(0.3) == 2
    assert tiles_per_axis(0.1) == 10
    assert tiles_per_axis(0.09) == 10
    assert tiles_per_axis(0.24) == 4
    for r in np.linspace(0.01, 0.49, 50):
        K = tiles_per_axis(r)
        assert K % 2 == 0 and r <= 1 / K + 1e-12


def check_certificate(nu, prime, cert, r, alpha):
    assert cert.holds
    pts = prime.points
    for p, q in itertools.combinations(pts, 2):
        assert torus_distance(p, q) >= r
    assert float(prime.total_mass) == pytest.approx(1)
    if alpha is not None:
        assert cert.energy_prime <= r ** (-alpha) + 1e-9


def test_checkerboard_examples():
    x = pt(F(1, 5), F(1, 5))
    prime, cert = checkerboard_decompose(FiniteMeasure.dirac(x), 0.3, lambda p: np.ones(len(p)))
    assert prime.points == (x,) and cert.holds
    two = FiniteMeasure.uniform([TorusPoint.approx_point([0.1, 0.1]), TorusPoint.approx_point([0.7, 0.1])])
    prime, cert = checkerboard_decompose(two, 0.3, lambda p: np.ones(len(p)), alpha=0.5)
    check_certificate(two, prime, cert, 0.3, 0.5)
    with pytest.raises(ZeroMass):
        checkerboard_decompose(two, 0.3, lambda p: np.zeros(len(p)))
    with pytest.raises(ValueError):
        checkerboard_decompose(two, 0.6, lambda p: np.ones(len(p)))
    with pytest.raises(ValueError):
        checkerboard_decompose(two, 0.3, lambda p: 2 * np.ones(len(p)))


def test_checkerboard_exact_measure_stays_exact():
    prime, cert = checkerboard_decompose(lattice(4), 0.2, lambda p: np.ones(len(p)))
    assert prime.exact and prime.total_mass == 1 and cert.holds


def smooth_half(p):
    return np.clip(0.5 + 10 * (0.5 - np.abs(p[:, 0] - 0.5)) - 2.5, 0, 1)


@pytest.mark.parametrize("r", [0.05, 0.15, 0.3])
def test_checkerboard_certificate_across_seeds(r):
    for seed in range(50):
        rng = np.random.default_rng(seed)
        nu = FiniteMeasure.from_arrays(rng.random((1000, 2)))
        prime, cert = checkerboard_decompose(nu, r, smooth_half, seed=seed, alpha=0.3)
        check_certificate(nu, prime, cert, r, 0.3)
