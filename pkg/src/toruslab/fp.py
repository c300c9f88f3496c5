"""Affine random walks on F_p^d: exact evolution, DFT, orbits and spectral gaps.

Functions on F_p^d are dense arrays of shape (p,)*d indexed by coordinates;
flattened indices are row-major.  Primal norms are plain sums, dual norms
carry the p^{-d} normalisation, so the DFT below is an isometry L^2 -> L^2-hat.
"""

from __future__ import annotations

import itertools
import math
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import DenominatorDividesP, DeterminantNotOne, DimensionMismatch, GroupTooLarge, WeightsInvalid
from .walk import WalkSpec, require_exact

__all__ = [
    "DualFunction",
    "FpDistribution",
    "FpWalkSpec",
    "GapVerdict",
    "GroupTable",
    "LVReport",
    "OrbitCensus",
    "build_group_table",
    "dual_action",
    "dual_theta_action",
    "fp_dft",
    "fp_dft_inverse",
    "fp_dual_action_check",
    "fp_evolve",
    "fp_fixed_point",
    "fp_norms",
    "fp_orbit_census",
    "gap_dichotomy_verdict",
    "init_decay_check",
    "is_prime",
    "lv_decay_run",
    "reduce_spec_mod_p",
    "regular_rep_gap",
]


def is_prime(n: int) -> bool:
    if n < 2:
        return False
    if n % 2 == 0:
        return n == 2
    return all(n % k for k in range(3, math.isqrt(n) + 1, 2))


def _det_mod(m: np.ndarray, p: int) -> int:
    a = [[int(v) % p for v in row] for row in m]
    n, det = len(a), 1
    for c in range(n):
        piv = next((i for i in range(c, n) if a[i][c]), None)
        if piv is None:
            return 0
        if piv != c:
            a[c], a[piv] = a[piv], a[c]
            det = -det
        det = det * a[c][c] % p
        inv = pow(a[c][c], -1, p)
        for i in range(c + 1, n):
            f = a[i][c] * inv % p
            a[i] = [(x - f * y) % p for x, y in zip(a[i], a[c])]
    return det % p


@dataclass(frozen=True)
class FpWalkSpec:
    """Walk on F_p^d: weights, matrices mod p with det 1, translations mod p."""

    p: int
    labels: tuple
    weights: tuple
    matrices: tuple
    translations: tuple

    def __post_init__(self):
        if not is_prime(self.p):
            raise ValueError(f"{self.p} is not prime")
        if not self.labels or not (len(self.labels) == len(self.weights) == len(self.matrices) == len(self.translations)):
            raise DimensionMismatch("labels, weights, matrices and translations must align")
        if any(w <= 0 for w in self.weights) or sum(self.weights) != 1:
            raise WeightsInvalid("weights must be positive and sum to 1")
        d = len(self.matrices[0])
        for m, u in zip(self.matrices, self.translations):
            if len(m) != d or any(len(r) != d for r in m) or len(u) != d:
                raise DimensionMismatch("inconsistent dimensions")
            if _det_mod(np.array(m), self.p) != 1:
                raise DeterminantNotOne(f"det {m} != 1 mod {self.p}")

    @classmethod
    def build(cls, p, labels, weights, matrices, translations=None) -> "FpWalkSpec":
        mats = tuple(tuple(tuple(int(v) % p for v in r) for r in m) for m in matrices)
        d = len(mats[0])
        if translations is None:
            translations = [(0,) * d] * len(mats)
        trans = tuple(tuple(int(v) % p for v in u) for u in translations)
        ws = tuple(Fraction(w) for w in weights)
        return cls(p, tuple(str(l) for l in labels), ws, mats, trans)

    @property
    def dim(self) -> int:
        return len(self.matrices[0])

    @property
    def size(self) -> int:
        return len(self.labels)

    @property
    def n_states(self) -> int:
        return self.p**self.dim

    @cached_property
    def points(self) -> np.ndarray:
        """All of F_p^d in row-major order, shape (p^d, d)."""
        return np.array(list(itertools.product(range(self.p), repeat=self.dim)), dtype=np.int64)

    def index(self, x: Sequence[int]) -> int:
        return int(np.ravel_multi_index(tuple(int(c) % self.p for c in x), (self.p,) * self.dim))

    def np_matrix(self, k: int) -> np.ndarray:
        return np.array(self.matrices[k], dtype=np.int64)

    @cached_property
    def permutations(self) -> np.ndarray:
        """perm[k][i] = index of (gamma_k, u_k) applied to point i."""
        out = []
        shape = (self.p,) * self.dim
        for k in range(self.size):
            img = (self.points @ self.np_matrix(k).T + np.array(self.translations[k])) % self.p
            out.append(np.ravel_multi_index(tuple(img.T), shape))
        return np.array(out)

    @cached_property
    def linear_permutations(self) -> np.ndarray:
        shape = (self.p,) * self.dim
        return np.array(
            [np.ravel_multi_index(tuple(((self.points @ self.np_matrix(k).T) % self.p).T), shape) for k in range(self.size)]
        )

    def transition_matrix(self) -> np.ndarray:
        """Dense column-stochastic T with T[y, x] = mu({g : g x = y})."""
        n = self.n_states
        T = np.zeros((n, n))
        cols = np.arange(n)
        for k, w in enumerate(self.weights):
            np.add.at(T, (self.permutations[k], cols), float(w))
        return T

    def is_symmetric(self) -> bool:
        """mu(g) = mu(g^{-1}) as a measure on affine maps."""
        table = {}
        for k in range(self.size):
            key = tuple(self.permutations[k])
            table[key] = table.get(key, 0) + self.weights[k]
        for key, w in table.items():
            perm = np.array(key)
            inv = np.empty_like(perm)
            inv[perm] = np.arange(len(perm))
            if table.get(tuple(inv), 0) != w:
                return False
        return True


def _mod_inverse_fraction(c: Fraction, p: int) -> int:
    if c.denominator % p == 0:
        raise DenominatorDividesP(f"denominator of {c} is divisible by {p}")
    return c.numerator * pow(c.denominator, -1, p) % p


def reduce_spec_mod_p(spec: WalkSpec, p: int) -> FpWalkSpec:
    """Reduce matrices mod p and read a/b translations as a * b^{-1} mod p."""
    require_exact(spec)
    trans = [tuple(_mod_inverse_fraction(c, p) for c in t.coords) for t in spec.translations]
    return FpWalkSpec.build(p, spec.labels, spec.weights, [m.rows for m in spec.matrices], trans)


@dataclass(frozen=True)
class FpDistribution:
    """Dense function on F_p^d (floats, or Fractions in exact mode)."""

    p: int
    d: int
    values: np.ndarray
    exact: bool = False

    @classmethod
    def delta(cls, p: int, d: int, x: Sequence[int], exact: bool = True) -> "FpDistribution":
        vals = np.zeros((p,) * d, dtype=object if exact else float)
        if exact:
            vals[...] = Fraction(0)
        vals[tuple(int(c) % p for c in x)] = Fraction(1) if exact else 1.0
        return cls(p, d, vals, exact)

    @classmethod
    def uniform(cls, p: int, d: int) -> "FpDistribution":
        return cls(p, d, np.full((p,) * d, 1.0 / p**d))

    def as_float(self) -> np.ndarray:
        return self.values.astype(float)

    @property
    def total_mass(self):
        return self.values.sum()


@dataclass(frozen=True)
class DualFunction:
    p: int
    d: int
    values: np.ndarray


def fp_evolve(spec: FpWalkSpec, x0: Sequence[int], n: int, exact: bool = True, history: bool = False):
    """mu^{*n} * delta_{x0} by exact permutation updates; optionally every step."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    cur = FpDistribution.delta(spec.p, spec.dim, x0, exact).values.reshape(-1)
    ws = list(spec.weights) if exact else [float(w) for w in spec.weights]
    out = [cur] if history else None
    for _ in range(n):
        nxt = np.zeros_like(cur)
        if exact:
            nxt[...] = Fraction(0)
        for perm, w in zip(spec.permutations, ws):
            nxt[perm] = nxt[perm] + w * cur
        cur = nxt
        if history:
            out.append(cur)
    shape = (spec.p,) * spec.dim
    if history:
        return [FpDistribution(spec.p, spec.dim, v.reshape(shape), exact) for v in out]
    return FpDistribution(spec.p, spec.dim, cur.reshape(shape), exact)


def fp_norms(f: FpDistribution | DualFunction, q) -> float:
    """L^q of a primal function (plain sum) or L^q-hat of a dual one (p^{-d} weights)."""
    raw = f.values.astype(float) if f.values.dtype == object else f.values
    vals = np.abs(raw)
    if q in (math.inf, "inf", float("inf")):
        return float(vals.max())
    if q not in (1, 2, 4):
        raise ValueError("q must be 1, 2, 4 or inf")
    s = float(np.sum(vals**q))
    if isinstance(f, DualFunction):
        s /= f.p**f.d
    return s ** (1.0 / q)


def fp_dft(f: FpDistribution) -> DualFunction:
    """f-hat(a) = sum_x e(<a, x>) f(x) with e(t) = exp(2 pi i t / p)."""
    vals = f.values.astype(float) if f.values.dtype == object else f.values
    return DualFunction(f.p, f.d, np.fft.ifftn(vals) * f.p**f.d)


def fp_dft_inverse(phi: DualFunction) -> FpDistribution:
    vals = np.fft.fftn(phi.values) / phi.p**phi.d
    return FpDistribution(phi.p, phi.d, vals)


def _phase(p: int, a: np.ndarray, u: Sequence[int]) -> np.ndarray:
    return np.exp(2j * np.pi * ((a @ np.asarray(u, dtype=np.int64)) % p) / p)


def dual_action(spec: FpWalkSpec, k: int, phi: np.ndarray) -> np.ndarray:
    """(A-hat(gamma, u) phi)(a) = e(<a, u>) phi(gamma^T a)."""
    p, d = spec.p, spec.dim
    pts = spec.points
    src = (pts @ spec.np_matrix(k)) % p  # rows are (gamma^T a)^T
    vals = phi[tuple(src.T)] * _phase(p, pts, spec.translations[k])
    return vals.reshape((p,) * d)


def dual_theta_action(spec: FpWalkSpec, psi: np.ndarray, weights=None) -> np.ndarray:
    """(A-hat^theta(mu_0) psi)(a) = sum_w P(w) psi(gamma(w)^T a)."""
    p, d = spec.p, spec.dim
    ws = [float(w) for w in (weights or spec.weights)]
    out = np.zeros((p,) * d, dtype=psi.dtype)
    for k, w in enumerate(ws):
        src = (spec.points @ spec.np_matrix(k)) % p
        out += w * psi[tuple(src.T)].reshape((p,) * d)
    return out


def _push(spec: FpWalkSpec, k: int, f: np.ndarray) -> np.ndarray:
    flat = f.reshape(-1)
    out = np.zeros_like(flat)
    out[spec.permutations[k]] = flat
    return out.reshape(f.shape)


def fp_dual_action_check(spec: FpWalkSpec, phi: DualFunction, k: int, tol: float = 1e-10) -> tuple[bool, float]:
    """Formula for A-hat(gamma, u) against DFT o A o DFT^{-1}; returns (ok, max deviation)."""
    direct = dual_action(spec, k, phi.values)
    f = fp_dft_inverse(phi)
    pushed = FpDistribution(spec.p, spec.dim, _push(spec, k, f.values))
    dev = float(np.max(np.abs(direct - fp_dft(pushed).values)))
    return dev <= tol, dev


# ------------------------------------------------------------------ orbits


@dataclass(frozen=True)
class OrbitCensus:
    labels: np.ndarray
    sizes: tuple
    zero_singleton: bool
    large_orbits_ok: bool

    @property
    def n_orbits(self) -> int:
        return len(self.sizes)

    def rows(self) -> list[tuple[int, int]]:
        return list(enumerate(self.sizes))


def _components(n: int, perms: np.ndarray):
    src = np.tile(np.arange(n), len(perms))
    dst = np.concatenate(list(perms))
    graph = coo_matrix((np.ones(len(src)), (src, dst)), shape=(n, n))
    return connected_components(graph, directed=True, connection="weak")


def fp_orbit_census(spec: FpWalkSpec) -> OrbitCensus:
    """Orbits of the linear parts on F_p^d; checks that nonzero orbits have size >= p."""
    n_comp, lab = _components(spec.n_states, spec.linear_permutations)
    # relabel components in order of first appearance for a stable report
    order = {}
    for c in lab:
        order.setdefault(int(c), len(order))
    lab = np.array([order[int(c)] for c in lab])
    sizes = tuple(int(s) for s in np.bincount(lab, minlength=n_comp))
    zero = sizes[lab[0]] == 1
    ok = zero and all(s >= spec.p for i, s in enumerate(sizes) if i != lab[0])
    return OrbitCensus(lab, sizes, zero, ok)


def affine_orbit(spec: FpWalkSpec, x0: Sequence[int]) -> np.ndarray:
    """Indices of the orbit of x0 under the affine generators."""
    _, lab = _components(spec.n_states, spec.permutations)
    return np.flatnonzero(lab == lab[spec.index(x0)])


def _solve_mod_p(rows: list[list[int]], rhs: list[int], p: int):
    """A particular solution and a kernel basis of A x = b over F_p, or None."""
    m, n = len(rows), len(rows[0])
    a = [[v % p for v in r] + [b % p] for r, b in zip(rows, rhs)]
    pivots, r = [], 0
    for c in range(n):
        piv = next((i for i in range(r, m) if a[i][c]), None)
        if piv is None:
            continue
        a[r], a[piv] = a[piv], a[r]
        inv = pow(a[r][c], -1, p)
        a[r] = [v * inv % p for v in a[r]]
        for i in range(m):
            if i != r and a[i][c]:
                f = a[i][c]
                a[i] = [(vi - f * vr) % p for vi, vr in zip(a[i], a[r])]
        pivots.append(c)
        r += 1
    if any(a[i][n] for i in range(r, m)):
        return None
    x = [0] * n
    for i, c in enumerate(pivots):
        x[c] = a[i][n]
    kernel = []
    for f in (c for c in range(n) if c not in pivots):
        v = [0] * n
        v[f] = 1
        for i, c in enumerate(pivots):
            v[c] = -a[i][f] % p
        kernel.append(v)
    return x, kernel


@dataclass(frozen=True)
class FixedPointResult:
    point: tuple | None
    kernel_dim: int
    unique: bool
    product_check: bool


def fp_fixed_point(spec: FpWalkSpec) -> FixedPointResult:
    """Solve (gamma(w) - I) x = -u(w) over F_p for all w simultaneously.

    ``product_check`` confirms the linear-algebra answer against a direct scan
    of F_p^d for points fixed by every generator.
    """
    p, d = spec.p, spec.dim
    rows, rhs = [], []
    for m, u in zip(spec.matrices, spec.translations):
        for i in range(d):
            rows.append([m[i][j] - (i == j) for j in range(d)])
            rhs.append(-u[i])
    sol = _solve_mod_p(rows, rhs, p)
    fixed = np.all(spec.permutations == np.arange(spec.n_states), axis=0)
    scan = [tuple(int(c) for c in spec.points[i]) for i in np.flatnonzero(fixed)]
    if sol is None:
        return FixedPointResult(None, 0, False, not scan)
    x, kernel = sol
    n_sol = p ** len(kernel)
    point = tuple(x)
    return FixedPointResult(point, len(kernel), len(kernel) == 0, point in scan and len(scan) == n_sol)


# ------------------------------------------------------------ regular representation


@dataclass
class GroupTable:
    """Elements of the group generated by the matrices, with left actions."""

    p: int
    d: int
    elements: list
    index: dict
    generator_actions: np.ndarray

    @property
    def order(self) -> int:
        return len(self.elements)


def _matmul_mod(a: tuple, b: tuple, p: int) -> tuple:
    d = len(a)
    return tuple(tuple(sum(a[i][k] * b[k][j] for k in range(d)) % p for j in range(d)) for i in range(d))


def build_group_table(matrices: Sequence, p: int, max_order: int = 10_000) -> GroupTable:
    """BFS closure of the generators in SL_d(F_p) (a finite semigroup is a group)."""
    gens = [tuple(tuple(int(v) % p for v in r) for r in m) for m in matrices]
    d = len(gens[0])
    ident = tuple(tuple(int(i == j) for j in range(d)) for i in range(d))
    index = {ident: 0}
    elements = [ident]
    queue = deque([ident])
    while queue:
        h = queue.popleft()
        for g in gens:
            gh = _matmul_mod(g, h, p)
            if gh not in index:
                if len(elements) >= max_order:
                    raise GroupTooLarge(f"group order exceeds {max_order}")
                index[gh] = len(elements)
                elements.append(gh)
                queue.append(gh)
    actions = np.array([[index[_matmul_mod(g, h, p)] for h in elements] for g in gens], dtype=np.int64)
    return GroupTable(p, d, elements, index, actions)


def _convolution_matrix(table: GroupTable, weights, k: int) -> np.ndarray:
    n = table.order
    T = np.zeros((n, n))
    for act, w in zip(table.generator_actions, weights):
        T[act, np.arange(n)] += float(w)
    return np.linalg.matrix_power(T, k)


def regular_rep_gap(
    table: GroupTable,
    weights: Sequence,
    k: int = 1,
    method: str = "auto",
    seed: int = 0,
    restarts: int = 3,
    tol: float = 1e-12,
    max_iter: int = 200_000,
) -> float:
    """Norm of left convolution by mu_0^{*k} on mean-zero functions on the group.

    (lambda(g) f)(h) = f(g^{-1} h).  ``method="power"`` runs power iteration on
    B^T B with B = T^k minus its constant part, matrix-free; ``"dense"`` takes
    the top singular value of B directly.  ``"auto"`` uses dense for groups of
    order <= 2048, where power iteration's slow convergence on clustered
    singular values would cost more than the SVD.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    n = table.order
    if len(weights) != len(table.generator_actions):
        raise DimensionMismatch("one weight per generator")
    if method == "auto":
        method = "dense" if n <= 2048 else "power"
    if method == "dense":
        B = _convolution_matrix(table, weights, k)
        B = B - B.mean(axis=0, keepdims=True)
        B = B - B.mean(axis=1, keepdims=True)
        return float(np.linalg.norm(B, 2)) if n > 1 else 0.0
    acts = table.generator_actions
    ws = [float(w) for w in weights]
    inv_acts = np.empty_like(acts)
    for i, a in enumerate(acts):
        inv_acts[i][a] = np.arange(n)

    def T(f):
        out = np.zeros_like(f)
        for a, w in zip(acts, ws):
            out[a] += w * f
        return out

    def TT(f):
        return sum(w * f[a] for a, w in zip(acts, ws))

    def normal(v):
        for _ in range(k):
            v = T(v)
        for _ in range(k):
            v = TT(v)
        return v - v.mean()

    rng = np.random.default_rng(seed)
    best = 0.0
    for _ in range(restarts):
        v = rng.standard_normal(n)
        v -= v.mean()
        nv = np.linalg.norm(v)
        if nv == 0:
            continue
        v /= nv
        ray = 0.0
        for _ in range(max_iter):
            w = normal(v)
            new = float(v @ w)
            nw = np.linalg.norm(w)
            if nw == 0:
                ray = 0.0
                break
            v = w / nw
            if abs(new - ray) <= tol * max(abs(new), 1e-300):
                ray = new
                break
            ray = new
        best = max(best, math.sqrt(max(ray, 0.0)))
    return best


# ------------------------------------------------------------ decay experiments


@dataclass
class LVReport:
    series: list
    orbit_size: int
    fixed_point_branch: bool
    first_passage_bound: int | None
    first_passage_equilibrium: int | None
    l4_ratio_max: float | None
    gap_quantity_min: float | None
    coverage: dict = field(default_factory=dict)
    l4_ratio_all_max: float | None = None


def _l4_hat(eta: np.ndarray) -> tuple[np.ndarray, float]:
    p = eta.shape[0]
    d = eta.ndim
    hat = np.abs(np.fft.ifftn(eta) * p**d)
    return hat, float((np.sum(hat**4) / p**d) ** 0.25)


def lv_decay_run(
    spec: FpWalkSpec,
    x0: Sequence[int],
    l_max: int,
    table: GroupTable | None = None,
    gap_k: int | None = None,
) -> LVReport:
    """Exact norms of mu^{*l} * delta_{x0} for l <= l_max.

    Records the first l with L^2 <= 19 p^{-1/4} and with L^2 <= 2 / sqrt(orbit
    size).  When a group table and a k with certified gap are supplied, each
    eta = mu^{*l} * delta_{x0} meeting the mass and L^4-hat hypotheses is used
    to evaluate the L^4-hat contraction ratio of A-hat^theta(mu_0^{*k}) and the
    largest displacement max_h || |eta-hat| - A-hat^theta(h) |eta-hat| ||.
    """
    p, d = spec.p, spec.dim
    hist = fp_evolve(spec, x0, l_max, exact=True, history=True)
    orbit = len(affine_orbit(spec, x0))
    bar = 19 * p ** (-0.25)
    eq = 2 / math.sqrt(orbit)
    series, fp_bound, fp_eq = [], None, None
    ratios, gaps, all_ratios = [], [], []
    cov = {"evaluated": 0, "mass_ok": 0, "l4_ok": 0, "qualifying": 0}
    for l, dist in enumerate(hist):
        eta = dist.as_float()
        l2 = float(np.sqrt(np.sum(eta**2)))
        linf = float(eta.max())
        hat, l4 = _l4_hat(eta)
        series.append((l, l2, linf, l4))
        if fp_bound is None and l2 <= bar:
            fp_bound = l
        if fp_eq is None and l2 <= eq:
            fp_eq = l
        if table is not None and gap_k is not None:
            cov["evaluated"] += 1
            mass_ok = linf <= 40 / 41 * l2
            l4_ok = l4 >= bar
            cov["mass_ok"] += mass_ok
            cov["l4_ok"] += l4_ok
            ratio = _theta_power_ratio(spec, table, hat, l4, gap_k)
            all_ratios.append(ratio)
            if mass_ok and l4_ok:
                cov["qualifying"] += 1
                ratios.append(ratio)
                gaps.append(_max_displacement(table, hat, l4))
    return LVReport(
        series,
        orbit,
        all(v[1] == 1.0 for v in series),
        fp_bound,
        fp_eq,
        max(ratios) if ratios else None,
        min(gaps) if gaps else None,
        cov,
        max(all_ratios) if all_ratios else None,
    )


def _apply_theta(mat: tuple, psi: np.ndarray, p: int) -> np.ndarray:
    d = psi.ndim
    pts = np.array(list(itertools.product(range(p), repeat=d)), dtype=np.int64)
    src = (pts @ np.array(mat, dtype=np.int64)) % p
    return psi[tuple(src.T)].reshape(psi.shape)


def _theta_power_ratio(spec: FpWalkSpec, table: GroupTable, hat: np.ndarray, l4: float, k: int) -> float:
    psi = hat
    for _ in range(k):
        psi = dual_theta_action(spec, psi)
    p, d = spec.p, spec.dim
    return float((np.sum(psi**4) / p**d) ** 0.25) / l4


def _max_displacement(table: GroupTable, hat: np.ndarray, l4: float) -> float:
    p, d = table.p, hat.ndim
    best = 0.0
    for h in table.elements:
        diff = hat - _apply_theta(h, hat, p)
        best = max(best, float((np.sum(np.abs(diff) ** 4) / p**d) ** 0.25))
    return best / l4 if l4 else 0.0


def init_decay_check(spec: FpWalkSpec, k_max: int = 30) -> tuple[bool, float, np.ndarray]:
    """Compare max_x ||mu^{*k} * delta_x||_inf with 1/2 + (1 - eps)^k.

    eps is read off the one-step maximum.  Returns (bound holds for all
    k <= k_max, eps, curve of the worst L^inf per k).
    """
    T = spec.transition_matrix()
    eps = 1.0 - float(T.max())
    M = np.eye(spec.n_states)
    curve = []
    ok = True
    for k in range(1, k_max + 1):
        M = T @ M
        worst = float(M.max())
        curve.append(worst)
        ok = ok and worst <= 0.5 + (1 - eps) ** k + 1e-12
    return ok, eps, np.array(curve)


@dataclass
class GapVerdict:
    verdict: str
    x: tuple | None
    y: tuple | None
    concentration: float
    profile: list | None = None
    x0: tuple | None = None
    orbit_size: int | None = None
    first_passage: int | None = None
    fitted_C: float | None = None
    fixed_point: tuple | None = None

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _fit_C(profile: np.ndarray, p: int) -> float:
    ns = np.arange(1, len(profile) + 1)

    def ok(C):
        return bool(np.all(profile <= C * np.maximum(p ** (-0.25), np.exp(-ns / C)) + 1e-15))

    lo, hi = 1e-6, 1.0
    while not ok(hi):
        hi *= 2
    for _ in range(200):
        mid = math.sqrt(lo * hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
        if hi / lo < 1 + 1e-12:
            break
    return hi


def gap_dichotomy_verdict(spec: FpWalkSpec, n_max: int, eps: float, x0: Sequence[int] | None = None) -> GapVerdict:
    """TRAPPED if one step moves some x to some y with probability >= 1 - eps; else DECAY.

    With ``x0`` the scan is restricted to that start, which gives a verdict for
    one orbit (a linear walk always traps 0).  In the DECAY branch the walk is
    run exactly from ``x0``, or from the start with the largest L^inf at n_max.
    The profile of max_y mu^{*n}({g x0 = y}) is reported with the smallest C
    such that it stays below C max(p^{-1/4}, e^{-n/C}), and with the first n
    where it drops to 2 / (orbit size).
    """
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    T = spec.transition_matrix()
    if x0 is not None:
        x_idx = spec.index(x0)
        y_idx = int(np.argmax(T[:, x_idx]))
    else:
        y_idx, x_idx = np.unravel_index(int(np.argmax(T)), T.shape)
    conc = float(T[y_idx, x_idx])
    fixed = fp_fixed_point(spec).point
    pt = lambda i: tuple(int(c) for c in spec.points[i])
    if conc >= 1 - eps:
        return GapVerdict("TRAPPED", pt(x_idx), pt(y_idx), conc, fixed_point=fixed)
    if x0 is None:
        M = np.linalg.matrix_power(T, n_max)
        x0 = pt(int(np.argmax(M.max(axis=0))))
    hist = fp_evolve(spec, x0, n_max, exact=True, history=True)
    profile = np.array([float(h.values.max()) for h in hist[1:]])
    orbit = len(affine_orbit(spec, x0))
    passage = next((i + 1 for i, v in enumerate(profile) if v <= 2 / orbit), None)
    return GapVerdict(
        "DECAY", None, None, conc, profile.tolist(), tuple(x0), orbit, passage, _fit_C(profile, spec.p), fixed
    )
