"""Fourier coefficients of measures on T^d and the decay/trapping experiments."""

from __future__ import annotations

import cmath
import itertools
import math
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .algebra import TorusPoint, frac_mod1, torus_norm_array, wrap_unit
from .errors import DimensionMismatch, EnumerationTooLarge, FrequencyNotDivisible, SupportCapExceeded
from .orbits import distance_to_PQ_upper
from .walk import EmpiricalSample, FiniteMeasure, WalkSpec, exact_pushforward, simulate_points

__all__ = [
    "ConvolutionBound",
    "DecayReport",
    "DichotomyVerdict",
    "GranuleResult",
    "TrapReport",
    "WeylTable",
    "decay_scan",
    "fourier_coefficient",
    "granule_detect",
    "mu0k_convolution_bound_check",
    "rate_dichotomy_check",
    "trapping_lowerbound_check",
    "weyl_scan",
]

TWO_PI = 2.0 * math.pi
EXACT_DECAY_CAP = 20_000


def _freq(a, dim: int) -> tuple:
    a = tuple(int(c) for c in a)
    if len(a) != dim:
        raise DimensionMismatch(f"frequency dim {len(a)}, measure dim {dim}")
    return a


def fourier_coefficient(m: FiniteMeasure | EmpiricalSample, a: Sequence[int]) -> complex:
    """sum_j w_j e^{2 pi i <a, x_j>}.

    Exact measures reduce each phase <a, x_j> mod 1 in rational arithmetic and
    sum the weights per phase before touching floats, so characters that are
    constant on the support come out exactly.
    """
    a = _freq(a, m.dim)
    if isinstance(m, FiniteMeasure) and m.exact:
        by_phase: dict = defaultdict(Fraction)
        for p, w in zip(m.points, m.weights):
            by_phase[frac_mod1(sum(ai * xi for ai, xi in zip(a, p.coords)))] += w
        total = 0j
        for ph, w in sorted(by_phase.items()):
            total += float(w) * (1.0 if ph == 0 else cmath.exp(2j * math.pi * float(ph)))
        return total
    pts, ws = m.points_array(), m.weights_array()
    phase = np.mod(pts @ np.asarray(a, dtype=float), 1.0)
    return complex(np.sum(ws * np.exp(1j * TWO_PI * phase)))


@dataclass(frozen=True)
class WeylTable:
    max_modulus: float
    argmax: tuple
    table: dict

    def rows(self) -> list[tuple]:
        return [(a, v) for a, v in self.table.items()]


def frequency_box(dim: int, A_max: int) -> list[tuple]:
    """Nonzero a in Z^d with ||a||_inf <= A_max, lexicographic."""
    rng = range(-A_max, A_max + 1)
    return [a for a in itertools.product(rng, repeat=dim) if any(a)]


def weyl_scan(m: FiniteMeasure | EmpiricalSample, A_max: int, chunk: int = 16) -> WeylTable:
    """|Fourier coefficient| over the frequency box 0 < ||a||_inf <= A_max."""
    if A_max < 1:
        raise ValueError("A_max must be at least 1")
    freqs = frequency_box(m.dim, A_max)
    table = {}
    if isinstance(m, FiniteMeasure) and m.exact:
        for a in freqs:
            table[a] = abs(fourier_coefficient(m, a))
    else:
        pts, ws = m.points_array(), m.weights_array()
        F = np.asarray(freqs, dtype=float)
        for s in range(0, len(F), chunk):
            block = F[s : s + chunk]
            phase = np.mod(pts @ block.T, 1.0)
            vals = np.abs(ws @ np.exp(1j * TWO_PI * phase))
            for a, v in zip(freqs[s : s + chunk], vals):
                table[a] = float(v)
    best = max(freqs, key=lambda a: (table[a], tuple(-c for c in a)))
    return WeylTable(table[best], best, table)


@dataclass
class DecayReport:
    """Per-n records of a measured quantity with Monte Carlo errors."""

    series: list
    fitted_rate: tuple | None = None
    metadata: dict = field(default_factory=dict)

    @property
    def ns(self) -> list[int]:
        return [r[0] for r in self.series]

    @property
    def values(self) -> np.ndarray:
        return np.array([r[1] for r in self.series], dtype=float)

    @property
    def stderrs(self) -> np.ndarray:
        return np.array([r[2] for r in self.series], dtype=float)

    def value_at(self, n: int) -> float:
        for r in self.series:
            if r[0] == n:
                return r[1]
        raise KeyError(n)


def _fit_log_linear(ns, vals) -> tuple | None:
    if len(ns) < 2:
        return None
    slope, intercept = np.polyfit(np.asarray(ns, float), np.log(np.asarray(vals, float)), 1)
    return float(-slope), float(intercept)


def _exact_series(spec: WalkSpec, x: TorusPoint, a: tuple, n_list: Sequence[int], cap: int):
    mu = FiniteMeasure.dirac(x)
    out, done = {}, 0
    for n in sorted(set(n_list)):
        mu = exact_pushforward(spec, mu, n - done, cap)
        done = n
        out[n] = abs(fourier_coefficient(mu, a))
    return out


def decay_scan(
    spec: WalkSpec,
    x: TorusPoint,
    a: Sequence[int],
    n_list: Sequence[int],
    N: int = 10_000,
    seed: int = 0,
    exact_cap: int = EXACT_DECAY_CAP,
) -> DecayReport:
    """|Fourier coefficient of mu^{*n} * delta_x at a| for each n in ``n_list``.

    Exact inputs whose support stays below ``exact_cap`` are evolved exactly
    (stderr 0); everything else is Monte Carlo with N chains that share one
    simulation up to max(n_list).  The log-linear fit uses the n where the
    modulus exceeds three standard errors.
    """
    if not n_list:
        raise ValueError("n_list must be nonempty")
    a = _freq(a, spec.dim)
    ns = sorted(set(int(n) for n in n_list))
    meta = {"spec": spec.fingerprint, "a": list(a), "seed": seed, "N": N, "x": str(x)}
    series = None
    if spec.exact and x.exact:
        try:
            ex = _exact_series(spec, x, a, ns, exact_cap)
            series = [(n, ex[n], 0.0) for n in ns]
            meta["method"] = "exact"
        except SupportCapExceeded:
            series = None
    if series is None:
        snaps = simulate_points(spec, x.as_array(), ns[-1], N, seed, record=ns)
        af = np.asarray(a, dtype=float)
        series = []
        for n in ns:
            if n == 0:
                series.append((0, 1.0, 0.0))
                continue
            ph = TWO_PI * np.mod(snaps[n] @ af, 1.0)
            c, s = np.cos(ph), np.sin(ph)
            mod = math.hypot(float(c.mean()), float(s.mean()))
            se = math.sqrt((c.var(ddof=1) + s.var(ddof=1)) / N) if N > 1 else 0.0
            series.append((n, mod, se))
        meta["method"] = "monte-carlo"
    fit_pts = [(n, v) for n, v, se in series if n > 0 and v > 3 * se and v > 0]
    fit = _fit_log_linear([p[0] for p in fit_pts], [p[1] for p in fit_pts])
    return DecayReport(series, fit, meta)


@dataclass(frozen=True)
class DichotomyVerdict:
    verdict: str
    modulus: float
    stderr: float
    horn_i: bool
    horn_ii: bool
    n_condition: bool
    Q: int
    Q_capped: bool
    distance_bound: float
    threshold: float
    witness: object

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "modulus": self.modulus,
            "stderr": self.stderr,
            "horn_i": self.horn_i,
            "horn_ii": self.horn_ii,
            "n_condition": self.n_condition,
            "Q": self.Q,
            "Q_capped": self.Q_capped,
            "distance_bound": self.distance_bound,
            "threshold": self.threshold,
            "witness": None if self.witness is None else self.witness.to_dict(),
        }


def rate_dichotomy_check(
    spec: WalkSpec,
    x: TorusPoint,
    a: Sequence[int],
    t: float,
    n: int,
    C: float,
    lam: float,
    N: int = 10_000,
    seed: int = 0,
    Q_max: int = 64,
) -> DichotomyVerdict:
    """Test candidate constants (C, lambda) against the rate dichotomy.

    Horn (i): measured modulus >= t with n >= C log(||a||/t).  Horn (ii): the
    certified P_Q distance bound with Q = (||a||/t)^C is at most e^{-lambda n}.
    CONSISTENT means (i) implies (ii).  Q is capped at ``Q_max`` (reported);
    a capped search can only make the distance bound larger.
    """
    if not 0 < t < 0.5:
        raise ValueError("t must lie in (0, 1/2)")
    a = _freq(a, spec.dim)
    norm_a = math.sqrt(sum(c * c for c in a))
    if norm_a == 0:
        raise ValueError("a must be nonzero")
    rep = decay_scan(spec, x, a, [n], N, seed)
    modulus, se = rep.series[0][1], rep.series[0][2]
    n_cond = n >= C * math.log(norm_a / t)
    horn_i = modulus >= t and n_cond
    Q_raw = (norm_a / t) ** C
    Q = int(min(max(1, math.floor(Q_raw)), Q_max))
    threshold = math.exp(-lam * n)
    bound, witness = (float("nan"), None)
    horn_ii = False
    if horn_i:
        bound, witness = distance_to_PQ_upper(spec, None, x, Q)
        horn_ii = bound <= threshold
    verdict = "CONSISTENT" if (not horn_i or horn_ii) else "VIOLATION_CANDIDATE"
    return DichotomyVerdict(verdict, modulus, se, horn_i, horn_ii, n_cond, Q, Q_raw > Q_max, bound, threshold, witness)


@dataclass
class TrapReport:
    report: DecayReport
    status: str
    c_hat: float
    crossover_n: int | None
    lower_bound_holds: bool


def trapping_lowerbound_check(
    spec: WalkSpec,
    x: TorusPoint,
    q: int,
    a: Sequence[int],
    n_list: Sequence[int],
    N: int = 10_000,
    seed: int = 0,
    crossover_level: float = 0.5,
) -> TrapReport:
    """Measure 1 - |Fourier coefficient| near a trap and fit the rate c.

    c_hat is the largest c with |coef| >= 1 - ||a|| e^{-c n} on the fit range
    (n with deficit above three standard errors).  The bound is then checked
    on every n with a three-stderr allowance.
    """
    a = _freq(a, spec.dim)
    if not any(a):
        raise ValueError("a must be nonzero")
    if any(c % q for c in a):
        raise FrequencyNotDivisible(f"{a} is not in {q}Z^d")
    norm_a = math.sqrt(sum(c * c for c in a))
    rep = decay_scan(spec, x, a, n_list, N, seed)
    crossover = next((n for n, v, _ in rep.series if v < crossover_level), None)
    deficits = [(n, 1.0 - v, se) for n, v, se in rep.series]
    fit = [(n, dfc) for n, dfc, se in deficits if n > 0 and dfc > 3 * se and dfc > 1e-12]
    if not fit:
        return TrapReport(rep, "exact-trap" if all(d <= 1e-12 for _, d, _ in deficits) else "no-signal",
                          math.inf, crossover, True)
    c_hat = min(-math.log(dfc / norm_a) / n for n, dfc in fit)
    holds = all(v >= 1 - norm_a * math.exp(-c_hat * n) - 3 * se - 1e-12 for n, v, se in rep.series)
    rep.fitted_rate = (c_hat, math.log(norm_a))
    return TrapReport(rep, "fitted", c_hat, crossover, holds)


@dataclass(frozen=True)
class ConvolutionBound:
    lhs: float
    rhs: float
    holds: bool
    t: float
    mass_A: float
    threshold_A: float
    A_holds: bool
    terms: int


def mu0k_convolution_bound_check(
    spec: WalkSpec, eta: FiniteMeasure, a: Sequence[int], k: int, budget: int = 10**6
) -> ConvolutionBound:
    """Check |(mu*eta)^(a)|^{2k} <= E|eta^((g1+..+gk-g_{k+1}-..-g_{2k})^T a)|.

    Enumerates all |Omega|^{2k} label tuples, groups the mass of mu_0^{(k)} by
    the summed matrix, and also checks mu_0^{(k)}(A) >= t^{2k}/2 for the set
    A of matrices where |eta^(g^T a)| >= t^{2k}/2.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    a = _freq(a, spec.dim)
    terms = spec.size ** (2 * k)
    if terms > budget:
        raise EnumerationTooLarge(f"{terms} tuples exceed budget {budget}")
    t = abs(fourier_coefficient(exact_pushforward(spec, eta, 1), a))
    lhs = t ** (2 * k)
    mats = [np.array(m.rows, dtype=object) for m in spec.matrices]
    ws = spec.weights
    law: dict = defaultdict(Fraction)
    for combo in itertools.product(range(spec.size), repeat=2 * k):
        S = sum(mats[i] for i in combo[:k]) - sum(mats[i] for i in combo[k:])
        w = Fraction(1)
        for i in combo:
            w *= ws[i]
        law[tuple(map(tuple, S.tolist()))] += w
    rhs, mass_A = 0.0, 0.0
    thr = lhs / 2
    for S, w in sorted(law.items()):
        freq = tuple(sum(S[i][j] * a[i] for i in range(len(a))) for j in range(len(a)))
        val = abs(fourier_coefficient(eta, freq))
        rhs += float(w) * val
        if val >= thr:
            mass_A += float(w)
    return ConvolutionBound(lhs, rhs, lhs <= rhs + 1e-9, t, mass_A, thr, mass_A >= thr - 1e-12, terms)


@dataclass(frozen=True)
class GranuleResult:
    centers: np.ndarray
    mass: float


def granule_detect(
    m: FiniteMeasure | EmpiricalSample, r: float, rho: float, mass_threshold: float
) -> GranuleResult | None:
    """Greedy r-separated set of heavy rho-boxes.

    Atoms are binned into half-open boxes of side rho; boxes are visited by
    decreasing mass (ties by box index) and each box contributes the weighted
    mean of its atoms as a center if that point is at least r from every
    accepted center.  Returns None when the rho-balls around the centers
    carry less than ``mass_threshold``.
    """
    if not rho < r / 2:
        raise ValueError("need rho < r/2")
    pts, ws = m.points_array(), m.weights_array()
    bins = np.floor(pts / rho).astype(np.int64)
    keys, inv = np.unique(bins, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    mass = np.bincount(inv, weights=ws, minlength=len(keys))
    order = sorted(range(len(keys)), key=lambda i: (-mass[i], tuple(keys[i])))
    sums = np.zeros((len(keys), pts.shape[1]))
    np.add.at(sums, inv, pts * ws[:, None])
    means = sums / mass[:, None]
    centers: list = []
    for i in order:
        c = means[i]
        if centers and np.min(torus_norm_array(np.asarray(centers) - c)) < r:
            continue
        centers.append(c)
    C = np.asarray(centers)
    tree = cKDTree(wrap_unit(pts.copy()), boxsize=1.0)
    hit = np.zeros(len(pts), dtype=bool)
    for lst in tree.query_ball_point(wrap_unit(C.copy()), rho):
        hit[lst] = True
    captured = float(ws[hit].sum())
    if captured < mass_threshold:
        return None
    return GranuleResult(C, captured)
