"""The thirteen acceptance criteria as callable checks.

Each ``criterion_k`` returns a :class:`CriterionResult`; a criterion passes
only when its numerical conditions hold and it finishes inside its time
budget.  ``run_all`` runs a selection in order.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .algebra import IntMatrix, TorusPoint, compose_word
from .energy import calibrate_C2, checkerboard_decompose, fit_contraction, margulis_inequality_check
from .fp import (
    DualFunction,
    FpDistribution,
    FpWalkSpec,
    affine_orbit,
    build_group_table,
    dual_action,
    dual_theta_action,
    fp_dft,
    fp_dual_action_check,
    fp_evolve,
    fp_fixed_point,
    fp_norms,
    fp_orbit_census,
    gap_dichotomy_verdict,
    init_decay_check,
    lv_decay_run,
    regular_rep_gap,
)
from .orbits import LinearFormSystem, concentration_probability, solve_integer_linear_approx
from .spectral import decay_scan, mu0k_convolution_bound_check, weyl_scan
from .specs import LOWER, UPPER, fp_fixedpoint, hyperbolic_pair, std_sl2, trapped_q3
from .walk import FiniteMeasure, WalkSpec, estimate_lyapunov, monte_carlo_measure, sample_endpoint

__all__ = ["CRITERIA", "CriterionResult", "run_all"]


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    runtime: float
    budget: float
    details: dict = field(default_factory=dict)

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"[{tag}] criterion {self.number:2d} {self.name} ({self.runtime:.2f}s / {self.budget:.0f}s)"

    def to_dict(self) -> dict:
        return {
            "number": self.number,
            "name": self.name,
            "passed": self.passed,
            "runtime": self.runtime,
            "budget": self.budget,
            "details": self.details,
        }


CRITERIA: dict[int, Callable[[], CriterionResult]] = {}


def _criterion(number: int, name: str, budget: float):
    def wrap(fn: Callable[[], tuple[bool, dict]]):
        def run() -> CriterionResult:
            t0 = time.perf_counter()
            ok, details = fn()
            dt = time.perf_counter() - t0
            details["within_budget"] = dt < budget
            return CriterionResult(number, name, bool(ok) and dt < budget, dt, budget, details)

        run.__name__ = f"criterion_{number}"
        run.__doc__ = fn.__doc__
        CRITERIA[number] = run
        return run

    return wrap


# ------------------------------------------------------------------ random instances


def random_sl2(rng: np.random.Generator, length: int = 3, max_power: int = 2) -> list[list[int]]:
    """Product of random elementary matrices; always in SL_2(Z)."""
    m = IntMatrix.identity(2)
    for i in range(length):
        e = int(rng.integers(-max_power, max_power + 1))
        step = IntMatrix.of([[1, e], [0, 1]] if i % 2 == 0 else [[1, 0], [e, 1]])
        m = step @ m
    return m.tolist()


def random_rational_point(rng: np.random.Generator, dim: int, max_den: int) -> TorusPoint:
    return TorusPoint.exact_point(
        Fraction(int(rng.integers(0, q)), int(q)) for q in rng.integers(1, max_den + 1, size=dim)
    )


def random_exact_spec(rng: np.random.Generator, n_labels: int, max_den: int = 12) -> WalkSpec:
    raw = rng.integers(1, 5, size=n_labels)
    weights = [Fraction(int(w), int(raw.sum())) for w in raw]
    mats = [random_sl2(rng) for _ in range(n_labels)]
    trans = [random_rational_point(rng, 2, max_den) for _ in range(n_labels)]
    return WalkSpec.build([f"w{i}" for i in range(n_labels)], weights, mats, trans)


def random_fp_spec(rng: np.random.Generator, p: int, n_labels: int) -> FpWalkSpec:
    raw = rng.integers(1, 5, size=n_labels)
    weights = [Fraction(int(w), int(raw.sum())) for w in raw]
    mats = [random_sl2(rng) for _ in range(n_labels)]
    trans = [tuple(int(v) for v in rng.integers(0, p, size=2)) for _ in range(n_labels)]
    return FpWalkSpec.build(p, [f"w{i}" for i in range(n_labels)], weights, mats, trans)


# ------------------------------------------------------------------ criteria


@_criterion(1, "trapped frequency identity", 1.0)
def _c1():
    """Exact |coefficient| = 1 at a = (3,0) for the height-3 orbit, n <= 20."""
    spec, x = trapped_q3()
    rep = decay_scan(spec, x, (3, 0), list(range(21)))
    dev = float(np.max(np.abs(rep.values - 1.0)))
    return rep.metadata["method"] == "exact" and dev <= 1e-12, {"max_deviation": dev, "method": rep.metadata["method"]}


@_criterion(2, "equidistribution decay", 120.0)
def _c2():
    """Max |coefficient| over 0 < |a|_inf <= 3 at n = 60 from a generic start."""
    spec = std_sl2()
    x = TorusPoint.approx_point([math.sqrt(2) % 1, math.sqrt(3) % 1])
    per_seed = {}
    for seed in range(5):
        tab = weyl_scan(monte_carlo_measure(spec, x, 60, 100_000, seed), 3)
        per_seed[seed] = {"max": tab.max_modulus, "argmax": list(tab.argmax)}
    worst = max(v["max"] for v in per_seed.values())
    return worst <= 0.02, {"worst": worst, "per_seed": per_seed}


def _crossings(values: np.ndarray, ns: list[int]):
    first = lambda pred: next((n for n, v in zip(ns, values) if pred(v)), None)
    below9 = first(lambda v: v < 0.9)
    n1 = None if below9 is None else below9 - 1
    return n1, first(lambda v: v < 0.5), first(lambda v: v <= 0.1)


@_criterion(3, "trapping crossover", 300.0)
def _c3():
    """Crossover window for the height-3 datum perturbed by delta."""
    ns = list(range(0, 201))
    rows = {}
    for delta in (1e-3, 1e-6, 1e-9):
        x = TorusPoint.approx_point([1 / 3 + delta, 2 / 3])
        for seed in range(5):
            rep = decay_scan(std_sl2(), x, (3, 0), ns, 10_000, seed)
            rows[(delta, seed)] = _crossings(rep.values, ns)
    main = [rows[(1e-6, s)] for s in range(5)]
    ordered = all(n1 is not None and s is not None and n2 is not None and n1 < s < n2 for n1, s, n2 in main)
    consistent = ordered and max(r[0] for r in main) < min(r[2] for r in main)
    monotone = all(
        None not in (rows[(1e-3, s)][1], rows[(1e-6, s)][1], rows[(1e-9, s)][1])
        and rows[(1e-3, s)][1] < rows[(1e-6, s)][1] < rows[(1e-9, s)][1]
        for s in range(5)
    )
    window = (max(r[0] for r in main), min(r[2] for r in main)) if ordered else None
    details = {
        "window": window,
        "ordered": ordered,
        "consistent": consistent,
        "monotone_in_delta": monotone,
        "crossings": {f"{d:g}/seed{s}": list(v) for (d, s), v in rows.items()},
    }
    return consistent and monotone, details


def _half_torus(pts: np.ndarray) -> np.ndarray:
    return np.clip(0.5 + 2.0 * np.sin(2 * np.pi * pts[:, 0]), 0.0, 1.0)


@_criterion(4, "checkerboard certificate", 30.0)
def _c4():
    """Mass share, diagonal bound and separation on 100 random measures."""
    alpha = 0.5
    failures, redraws = [], 0
    for i in range(100):
        rng = np.random.default_rng(1000 + i)
        f = (lambda p: np.ones(len(p))) if i % 2 == 0 else _half_torus
        r = 0.3 if (i // 2) % 2 == 0 else 0.1
        while True:
            n_atoms = int(rng.integers(1, 1001))
            n_clusters = int(rng.integers(1, 6))
            centers = rng.random((n_clusters, 2))
            spread = 10.0 ** rng.uniform(-4, -0.5)
            noise = spread * rng.standard_normal((n_atoms, 2))
            pts = np.mod(centers[rng.integers(0, n_clusters, n_atoms)] + noise, 1.0)
            w = rng.dirichlet(np.ones(n_atoms))
            if float(w @ f(pts)) > 0:  # the decomposition needs int f dnu > 0
                break
            redraws += 1
        _, cert = checkerboard_decompose(FiniteMeasure.from_arrays(pts, w), r, f, seed=i, alpha=alpha)
        energy_ok = cert.energy_prime <= r ** (-alpha) + 1e-12
        if not (cert.holds and energy_ok):
            failures.append((i, cert.mass_ok, cert.diag_ok, cert.separated, energy_ok))
    return not failures, {"runs": 100, "redraws": redraws, "failures": failures}


@_criterion(5, "convolution bound", 30.0)
def _c5():
    """|(mu*eta)^(a)|^{2k} against the mu_0^{(k)} average on 100 instances."""
    bad = []
    for i in range(100):
        rng = np.random.default_rng(2000 + i)
        spec = random_exact_spec(rng, int(rng.integers(1, 4)))
        k = int(rng.integers(1, 3))
        n_atoms = int(rng.integers(1, 7))
        raw = rng.integers(1, 6, size=n_atoms)
        eta = FiniteMeasure.from_atoms(
            (random_rational_point(rng, 2, 10), Fraction(int(w), int(raw.sum()))) for w in raw
        )
        a = (0, 0)
        while a == (0, 0):
            a = tuple(int(v) for v in rng.integers(-3, 4, size=2))
        res = mu0k_convolution_bound_check(spec, eta, a, k)
        if not (res.lhs <= res.rhs + 1e-9 and res.A_holds):
            bad.append({"instance": i, "lhs": res.lhs, "rhs": res.rhs, "mass_A": res.mass_A})
    return not bad, {"instances": 100, "failures": bad}


def _random_forms(rng: np.random.Generator, D: int) -> list[list[int]]:
    n_forms = int(rng.integers(1, 5))
    forms = []
    while len(forms) < n_forms:
        f = [int(v) for v in rng.integers(-5, 6, size=D)]
        if any(f) and sum(c * c for c in f) <= 100:
            forms.append(f)
    return forms


def _near_solution(rng: np.random.Generator, sys: LinearFormSystem, r: Fraction) -> list[Fraction]:
    """Exact point of the solution set of phi(y) in Z, plus a perturbation of size <= r / M."""
    D = sys.D
    while True:
        L = int(rng.integers(1, 7))
        y = [Fraction(int(v), L) for v in rng.integers(-3 * L, 3 * L + 1, size=D)]
        if all(sum(c * v for c, v in zip(f, y)).denominator == 1 for f in sys.forms):
            break
    scale = r / (Fraction(math.isqrt(sys.M_squared) + 1) * D)
    e = [scale * Fraction(int(v), 1000) for v in rng.integers(-1000, 1001, size=D)]
    return [a + b for a, b in zip(y, e)]


@_criterion(6, "integer linear approximation", 10.0)
def _c6():
    """q <= M^D and the remainder bound hold exactly on 200 random systems."""
    bad = []
    for i in range(200):
        rng = np.random.default_rng(3000 + i)
        D = int(rng.integers(1, 4))
        sys = LinearFormSystem.of(_random_forms(rng, D))
        r = Fraction(1, 10 ** int(rng.integers(1, 7)))
        pt = _near_solution(rng, sys, r)
        dec = solve_integer_linear_approx(sys, pt, r)
        if not (dec.q_bound_holds and dec.remainder_bound_holds):
            bad.append({"instance": i, "q": dec.q})
    return not bad, {"systems": 200, "failures": bad}


@_criterion(7, "contraction hypothesis", 120.0)
def _c7():
    """a_hat < 1 for std-sl2 and a_hat = 1 for a walk with identity linear parts."""
    fit = fit_contraction(std_sl2(), 0.05, 20, 1000, 1000, seed=0)
    ident = WalkSpec.build(["s", "t"], ["1/2", "1/2"], [[[1, 0], [0, 1]]] * 2, [["1/3", "0"], ["0", "1/5"]])
    ctrl = fit_contraction(ident, 0.05, 20, 1000, 1000, seed=0)
    ok = fit.a_hat < 1 and abs(ctrl.a_hat - 1) <= 1e-9
    return ok, {
        "a_hat": fit.a_hat,
        "C_hat": fit.C_hat,
        "linear_pairs": fit.linear_pairs,
        "control_a_hat": ctrl.a_hat,
        "control_C_hat": ctrl.C_hat,
    }


def _lattice(k: int) -> FiniteMeasure:
    return FiniteMeasure.uniform([TorusPoint.exact_point([Fraction(i, k), Fraction(j, k)]) for i in range(k) for j in range(k)])


def _cloud(seed: int, n: int, clusters: int = 1) -> FiniteMeasure:
    rng = np.random.default_rng(seed)
    c = rng.random((clusters, 2))
    pts = np.mod(c[rng.integers(0, clusters, n)] + 0.02 * rng.standard_normal((n, 2)), 1.0)
    return FiniteMeasure.from_arrays(pts)


@_criterion(8, "Margulis inequality with calibrated C2", 300.0)
def _c8():
    """Calibrate C2 on one suite, then check a disjoint held-out suite."""
    alpha, lam, n2, N = 0.1, 0.1, 5, 20_000
    specs = [std_sl2(), hyperbolic_pair()]
    calib_nus = [
        FiniteMeasure.dirac(TorusPoint.exact_point(["1/7", "3/7"])),
        _lattice(3),
        _cloud(11, 50),
    ]
    held_nus = [
        FiniteMeasure.dirac(TorusPoint.approx_point([math.sqrt(2) % 1, math.sqrt(5) % 1])),
        _lattice(5),
        _cloud(12, 80),
        _cloud(13, 60, clusters=2),
    ]
    diam = math.sqrt(2) / 2
    calib = [(s, nu, rho) for s in specs for nu in calib_nus for rho in (0.05, 0.1, diam)]
    held = [(s, nu, rho) for s in specs for nu in held_nus for rho in (0.07, 0.15, 0.3)]
    C2 = calibrate_C2(calib, alpha, lam, n2, N, seed=0)
    recs = [margulis_inequality_check(s, nu, alpha, lam, n2, rho, C2, N, seed=1) for s, nu, rho in held]
    frac = float(np.mean([r.holds for r in recs]))
    bad = [i for i, r in enumerate(recs) if not r.holds and r.lhs - r.rhs > 2 * r.stderr]
    return frac >= 0.99 and not bad, {"C2": C2, "held_out": len(recs), "fraction_holding": frac, "hard_failures": bad}


@_criterion(9, "Lyapunov oracle", 30.0)
def _c9():
    """Single-matrix walk on [[2,1],[1,1]] against log of its top eigenvalue."""
    spec = WalkSpec.build(["A"], ["1"], [[[2, 1], [1, 1]]])
    est = estimate_lyapunov(spec, 10_000, 32, seed=0)
    target = math.log((3 + math.sqrt(5)) / 2)
    err = abs(est.lambda1_hat - target)
    return err <= 1e-3, {"lambda1_hat": est.lambda1_hat, "target": target, "error": err}


@_criterion(10, "F_p exactness block", 60.0)
def _c10():
    """Parseval, dual action, pointwise domination, census and mixing for p in 5, 7, 11."""
    out, ok = {}, True
    for p in (5, 7, 11):
        rng = np.random.default_rng(p)
        trans = [tuple(int(v) for v in rng.integers(0, p, size=2)) for _ in range(2)]
        spec = FpWalkSpec.build(p, ["a", "b"], ["1/2", "1/2"], [UPPER, LOWER], trans)
        f = FpDistribution(p, 2, rng.random((p, p)))
        parseval = abs(fp_norms(f, 2) - fp_norms(fp_dft(f), 2))
        phi = rng.standard_normal((p, p)) + 1j * rng.standard_normal((p, p))
        dual_dev = max(fp_dual_action_check(spec, DualFunction(p, 2, phi), k)[1] for k in range(spec.size))
        lhs = np.abs(sum(float(w) * dual_action(spec, k, phi) for k, w in enumerate(spec.weights)))
        rhs = dual_theta_action(spec, np.abs(phi))
        dom_excess = float(np.max(lhs - rhs))
        dominated = dom_excess <= 1e-12 * float(np.max(rhs))
        linear = FpWalkSpec.build(p, ["a", "b"], ["1/2", "1/2"], [UPPER, LOWER])
        census = fp_orbit_census(linear)
        orbit = len(affine_orbit(linear, (1, 0)))
        hist = fp_evolve(linear, (1, 0), 50, exact=True, history=True)
        linf = [float(max(h.values.reshape(-1))) for h in hist]
        hit = next((n for n, v in enumerate(linf) if abs(v - 1 / orbit) <= 0.1 / orbit), None)
        row_ok = parseval <= 1e-10 and dual_dev <= 1e-10 and dominated and census.zero_singleton
        row_ok = row_ok and census.large_orbits_ok and hit is not None
        ok = ok and row_ok
        out[p] = {
            "parseval": parseval,
            "dual_action_dev": dual_dev,
            "domination_excess": dom_excess,
            "census_sizes": sorted(set(census.sizes)),
            "orbit_of_(1,0)": orbit,
            "first_n_within_10pct": hit,
            "linf_at_50": linf[50],
        }
    return ok, out


@_criterion(11, "spectral gap block", 120.0)
def _c11():
    """Gap of SL_2(F_5), submultiplicativity and the L^4-hat contraction."""
    p = 5
    inv_up, inv_lo = [[1, -1], [0, 1]], [[1, 0], [-1, 1]]
    mats = [UPPER, inv_up, LOWER, inv_lo]
    weights = [Fraction(1, 4)] * 4
    table = build_group_table(mats, p)
    g = regular_rep_gap(table, weights, 1, method="dense")
    g_power = regular_rep_gap(table, weights, 1, method="power", seed=0)
    submult = {k: regular_rep_gap(table, weights, k) for k in range(1, 13)}
    sub_ok = all(v <= g**k + 1e-9 for k, v in submult.items())
    k_star = next(k for k in itertools.count(1) if g**k <= 2.0**-5)
    spec = FpWalkSpec.build(p, ["a", "a'", "b", "b'"], weights, mats)
    rep = lv_decay_run(spec, (1, 0), 30, table, k_star)
    bound = 2.0 ** (-(2.0**-34)) + 1e-9
    ratio_ok = rep.l4_ratio_max is None or rep.l4_ratio_max <= bound
    all_ok = rep.l4_ratio_all_max is not None and rep.l4_ratio_all_max <= 1 + 1e-12
    gapin_ok = rep.gap_quantity_min is None or rep.gap_quantity_min >= 0.07
    ok = table.order == 120 and g < 1 and abs(g - g_power) <= 1e-6 and sub_ok and ratio_ok and all_ok and gapin_ok
    return ok, {
        "order": table.order,
        "gap": g,
        "gap_power_iteration": g_power,
        "submultiplicative": sub_ok,
        "k_star": k_star,
        "coverage": rep.coverage,
        "qualifying_ratio_max": rep.l4_ratio_max,
        "all_ratio_max": rep.l4_ratio_all_max,
        "gap_quantity_min": rep.gap_quantity_min,
    }


@_criterion(12, "fixed-point dichotomy", 60.0)
def _c12():
    """TRAPPED at a constructed fixed point, DECAY for std-sl2 mod 7, initial decay bound."""
    fixed_spec = fp_fixedpoint()
    fx = fp_fixed_point(fixed_spec)
    trapped = gap_dichotomy_verdict(fixed_spec, 30, 0.1)
    linear7 = FpWalkSpec.build(7, ["a", "b"], ["1/2", "1/2"], [UPPER, LOWER])
    decay = gap_dichotomy_verdict(linear7, 60, 0.1, x0=(1, 0))
    init = []
    for i in range(20):
        rng = np.random.default_rng(4000 + i)
        spec = random_fp_spec(rng, int(rng.choice([5, 7])), int(rng.integers(2, 4)))
        init.append(init_decay_check(spec, 30)[0])
    ok = (
        trapped.verdict == "TRAPPED"
        and fx.unique
        and fx.point == (2, 3)
        and decay.verdict == "DECAY"
        and decay.first_passage is not None
        and all(init)
    )
    return ok, {
        "trapped_verdict": trapped.verdict,
        "fixed_point": fx.point,
        "decay_verdict": decay.verdict,
        "orbit_size": decay.orbit_size,
        "first_passage": decay.first_passage,
        "fitted_C": decay.fitted_C,
        "init_decay_ok": sum(init),
    }


def brute_force_probability(spec: WalkSpec, x: TorusPoint, y: TorusPoint, n: int) -> Fraction:
    """Sum of word probabilities over all |Omega|^n words sending x to y."""
    if n == 0:
        return Fraction(int(x == y))
    total = Fraction(0)
    for word in itertools.product(range(spec.size), repeat=n):
        if compose_word(spec, [spec.labels[i] for i in word])(x) == y:
            w = Fraction(1)
            for i in word:
                w *= spec.weights[i]
            total += w
    return total


@_criterion(13, "exhaustive-word oracle", 60.0)
def _c13():
    """concentration_probability equals word enumeration on 50 random specs."""
    bad = []
    for i in range(50):
        rng = np.random.default_rng(5000 + i)
        spec = random_exact_spec(rng, int(rng.integers(1, 4)), max_den=6)
        x = random_rational_point(rng, 2, 6)
        for n in range(0, 7):
            y = sample_endpoint(spec, x, n, seed=i) if n else x
            if concentration_probability(spec, x, y, n) != brute_force_probability(spec, x, y, n):
                bad.append((i, n))
    return not bad, {"specs": 50, "mismatches": bad}


def run_all(only: Sequence[int] | None = None, echo: Callable[[str], None] | None = None) -> list[CriterionResult]:
    """Run the selected criteria (all by default) and optionally echo one line each."""
    results = []
    for k in sorted(only or CRITERIA):
        res = CRITERIA[k]()
        if echo is not None:
            echo(res.line())
        results.append(res)
    return results
