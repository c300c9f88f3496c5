"""Finite orbits, heights and periodic data of affine walks.

Everything here is exact: points are Fractions, matrices are Python ints.
Float inputs are accepted only where the question still makes sense for
the dyadic rational a float stores (membership in P_Q, distance bounds).
"""

from __future__ import annotations

import itertools
import math
from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .algebra import IntMatrix, TorusPoint, frac_mod1, parse_rational, torus_distance, torus_norm_array, wrap_unit
from .errors import ExactnessRequired, NotFinite, PreconditionViolated, DimensionMismatch, CapExceeded
from .walk import FiniteMeasure, WalkSpec, exact_pushforward, require_exact, DEFAULT_SUPPORT_CAP

__all__ = [
    "ApproxDecomposition",
    "LinearFormSystem",
    "OrbitReport",
    "PeriodicDatum",
    "concentration_probability",
    "diagonalize_integer",
    "displacement",
    "distance_to_PQ_upper",
    "fixed_point_solve",
    "is_in_PQ",
    "orbit_closure",
    "orbit_height",
    "solve_integer_linear_approx",
]


def _lcm(values) -> int:
    out = 1
    for v in values:
        out = out * v // math.gcd(out, v)
    return out


def displacement(matrix: IntMatrix, u: Sequence[Fraction], x: Sequence[Fraction]) -> tuple:
    """gamma x + u - x reduced mod 1, exactly."""
    gx = matrix.matvec(x)
    return tuple(frac_mod1(a + b - c) for a, b, c in zip(gx, u, x))


def _exact_coords(p: TorusPoint) -> tuple:
    return p.coords if p.exact else tuple(Fraction(c) for c in p.coords)


def _height_from(matrices, translations, x: tuple) -> int:
    dens = []
    for m, u in zip(matrices, translations):
        dens.extend(c.denominator for c in displacement(m, u, x))
    return _lcm(dens)


@dataclass(frozen=True)
class OrbitReport:
    """Outcome of an orbit computation.

    ``orbit_points`` is None when the orbit is certified finite but has more
    points than the enumeration cap allowed.
    """

    finite: bool
    orbit_points: tuple | None
    orbit_size: int | None
    height_q: int | None
    generator_witness: str | None = None
    cap_exceeded: bool = False

    def to_dict(self) -> dict:
        return {
            "finite": self.finite,
            "orbit_size": self.orbit_size,
            "q": self.height_q,
            "orbit_points": None if self.orbit_points is None else [str(p) for p in self.orbit_points],
            "generator_witness": self.generator_witness,
            "cap_exceeded": self.cap_exceeded,
        }


def _bfs(spec: WalkSpec, x: TorusPoint, cap: int):
    gens = spec.generators()
    seen = {x.coords: x}
    queue = deque([x])
    while queue:
        p = queue.popleft()
        for g in gens:
            img = g(p)
            if img.coords not in seen:
                if len(seen) >= cap:
                    return None
                seen[img.coords] = img
                queue.append(img)
    return tuple(sorted(seen.values(), key=lambda p: p.coords))


def orbit_closure(spec: WalkSpec, x: TorusPoint, cap: int = 100_000, certify: bool = True) -> OrbitReport:
    """Orbit of x under the group generated by the walk's affine maps.

    With ``certify`` the generator displacements decide finiteness at once
    (rational displacements with common denominator q mean the orbit lives
    in x + (1/q)Z^d); the BFS then only lists the points.  Without it, a BFS
    that hits ``cap`` raises CapExceeded.
    """
    require_exact(spec, x)
    if x.dim != spec.dim:
        raise DimensionMismatch(f"point dim {x.dim}, spec dim {spec.dim}")
    q = _height_from(spec.matrices, [t.coords for t in spec.translations], x.coords)
    pts = _bfs(spec, x, cap)
    if pts is None:
        if not certify:
            raise CapExceeded(f"orbit has more than {cap} points")
        return OrbitReport(True, None, None, q, cap_exceeded=True)
    return OrbitReport(True, pts, len(pts), q)


def orbit_height(spec: WalkSpec, x: TorusPoint) -> int:
    """Least q with every generator displacement in (1/q)Z^d/Z^d."""
    if not (spec.exact and x.exact):
        raise NotFinite("height is only defined for exact data; floats have no finite-orbit verdict")
    return _height_from(spec.matrices, [t.coords for t in spec.translations], x.coords)


def is_in_PQ(spec: WalkSpec, u: Sequence[TorusPoint] | None, x: TorusPoint, Q: int) -> tuple[bool, int]:
    """Whether (u, x) has a finite orbit of height at most Q; also the height.

    Float coordinates are read as the exact dyadic rationals they store, so
    an irrational-looking float has an astronomically large height.
    """
    u = spec.translations if u is None else u
    if len(u) != spec.size:
        raise DimensionMismatch("need one translation per label")
    q = _height_from(spec.matrices, [_exact_coords(t) for t in u], _exact_coords(x))
    return q <= Q, q


@dataclass(frozen=True)
class PeriodicDatum:
    """(u', x', q) with gamma(w) x' + u'(w) - x' in (1/q)Z^d for every w."""

    u_prime: tuple
    x_prime: TorusPoint
    q: int

    def verify(self, matrices: Sequence[IntMatrix]) -> bool:
        for m, u in zip(matrices, self.u_prime):
            if any((c * self.q).denominator != 1 for c in displacement(m, u.coords, self.x_prime.coords)):
                return False
        return True

    def to_dict(self) -> dict:
        return {"u": [str(t) for t in self.u_prime], "x": str(self.x_prime), "q": self.q}


def _snap_exact(matrix: IntMatrix, u: tuple, xp: tuple, q: int) -> TorusPoint:
    base = [frac_mod1(a - b) for a, b in zip(xp, matrix.matvec(xp))]
    out = []
    for b, uc in zip(base, u):
        delta = frac_mod1(uc - b)
        m = math.floor(delta * q + Fraction(1, 2))
        out.append(b + Fraction(m, q))
    return TorusPoint.exact_point(out)


def _exact_candidate(spec: WalkSpec, u_ex: list, x: TorusPoint, xp: tuple, q: int):
    x_prime = TorusPoint.exact_point(xp)
    u_prime = tuple(_snap_exact(m, uu, x_prime.coords, q) for m, uu in zip(spec.matrices, u_ex))
    u_pts = [TorusPoint(uu, True) for uu in u_ex]
    x_ex = TorusPoint(_exact_coords(x), True)
    bound = max([torus_distance(x_ex, x_prime)] + [torus_distance(a, b) for a, b in zip(u_pts, u_prime)])
    return bound, PeriodicDatum(u_prime, x_prime, q)


def _grid_objective(G: np.ndarray, U: np.ndarray, x: np.ndarray, cand: np.ndarray, q: int) -> np.ndarray:
    obj = torus_norm_array(cand - x)
    for g, u in zip(G, U):
        base = cand - cand @ g.T
        delta = np.mod(u - base, 1.0)
        resid = delta - np.round(delta * q) / q
        obj = np.maximum(obj, np.sqrt(np.sum(resid * resid, axis=-1)))
    return obj


def _offsets(K: int, d: int) -> np.ndarray:
    ax = np.arange(-K, K + 1)
    return np.stack(np.meshgrid(*([ax] * d), indexing="ij"), axis=-1).reshape(-1, d)


def distance_to_PQ_upper(
    spec: WalkSpec,
    u: Sequence[TorusPoint] | None,
    x: TorusPoint,
    Q: int,
    resolution: float = 1e-10,
    refine_depth: int = 16,
) -> tuple[float, PeriodicDatum]:
    """Certified upper bound on the max-metric distance from (u, x) to P_Q.

    For each height q <= Q the candidate base points x' run over a grid of
    spacing 1/(4q) centred at x, refined fourfold per level around the best
    candidate.  For fixed (q, x') the nearest admissible u'(w) is the snap of
    u(w) to x' - gamma(w) x' + (1/q)Z^d.  The returned witness satisfies the
    periodicity condition exactly and realises the bound.
    """
    if Q < 1:
        raise ValueError("Q must be at least 1")
    u = spec.translations if u is None else tuple(u)
    u_ex = [_exact_coords(t) for t in u]
    G = spec.float_matrices
    U = np.stack([t.as_array() for t in u])
    xf = x.as_array()
    d = spec.dim
    best: tuple[float, PeriodicDatum] | None = None
    for q in range(1, Q + 1):
        cands = [_exact_candidate(spec, u_ex, x, _exact_coords(x), q)]
        h = 1.0 / (4 * q)
        grid = wrap_unit(xf + _offsets(2 * q, d) * h)
        center = grid[int(np.argmin(_grid_objective(G, U, xf, grid, q)))]
        cands.append(_exact_candidate(spec, u_ex, x, tuple(Fraction(float(c)) for c in center), q))
        for _ in range(refine_depth):
            h /= 4.0
            if h < resolution:
                break
            grid = wrap_unit(center + _offsets(4, d) * h)
            obj = _grid_objective(G, U, xf, grid, q)
            center = grid[int(np.argmin(obj))]
            cands.append(_exact_candidate(spec, u_ex, x, tuple(Fraction(float(c)) for c in center), q))
        for c in cands:
            if best is None or c[0] < best[0]:
                best = c
    return best


# ------------------------------------------------------- integer-linear approximation


@dataclass(frozen=True)
class LinearFormSystem:
    """Integer linear forms on R^D, one coefficient row per form."""

    forms: tuple

    def __post_init__(self):
        if not self.forms:
            raise ValueError("need at least one form")
        D = len(self.forms[0])
        if any(len(f) != D for f in self.forms):
            raise DimensionMismatch("forms must share the ambient dimension")

    @classmethod
    def of(cls, forms) -> "LinearFormSystem":
        return cls(tuple(tuple(int(c) for c in f) for f in forms))

    @property
    def D(self) -> int:
        return len(self.forms[0])

    @property
    def M_squared(self) -> int:
        return max(sum(c * c for c in f) for f in self.forms)

    @property
    def M(self) -> float:
        return math.sqrt(self.M_squared)


@dataclass(frozen=True)
class ApproxDecomposition:
    q: int
    kernel_part: tuple
    lattice_part: tuple
    remainder: tuple
    minor_rows: tuple
    pivot_columns: tuple
    q_bound_holds: bool
    remainder_bound_holds: bool

    @property
    def remainder_norm(self) -> float:
        return math.sqrt(sum(float(c) ** 2 for c in self.remainder))


def _rref(rows: list[list[Fraction]]):
    a = [list(r) for r in rows]
    m, n = len(a), len(a[0])
    pivots, r = [], 0
    for c in range(n):
        piv = next((i for i in range(r, m) if a[i][c] != 0), None)
        if piv is None:
            continue
        a[r], a[piv] = a[piv], a[r]
        inv = 1 / a[r][c]
        a[r] = [v * inv for v in a[r]]
        for i in range(m):
            if i != r and a[i][c] != 0:
                f = a[i][c]
                a[i] = [vi - f * vr for vi, vr in zip(a[i], a[r])]
        pivots.append(c)
        r += 1
        if r == m:
            break
    return a[:r], pivots


def _det_fraction(mat: list[list]) -> Fraction:
    n = len(mat)
    a = [[Fraction(v) for v in r] for r in mat]
    det = Fraction(1)
    for c in range(n):
        piv = next((i for i in range(c, n) if a[i][c] != 0), None)
        if piv is None:
            return Fraction(0)
        if piv != c:
            a[c], a[piv] = a[piv], a[c]
            det = -det
        det *= a[c][c]
        for i in range(c + 1, n):
            f = a[i][c] / a[c][c]
            if f:
                a[i] = [vi - f * vc for vi, vc in zip(a[i], a[c])]
    return det


def _solve_fraction(mat: list[list], rhs: list) -> list[Fraction]:
    n = len(mat)
    aug = [[Fraction(v) for v in r] + [Fraction(b)] for r, b in zip(mat, rhs)]
    red, piv = _rref(aug)
    if len(piv) != n or piv[-1] >= n:
        raise ValueError("singular system")
    return [red[i][n] for i in range(n)]


def _select_minor(rows: list[tuple], k: int, exhaustive_limit: int = 20_000) -> tuple[tuple, int]:
    """Rows of a k x k minor with the largest |det|; ties go to the lowest indices."""
    m = len(rows)
    if math.comb(m, k) <= exhaustive_limit:
        best, best_det = None, -1
        for combo in itertools.combinations(range(m), k):
            dv = abs(int(_det_fraction([rows[i] for i in combo])))
            if dv > best_det:
                best, best_det = combo, dv
        return best, best_det
    # greedy: grow the row set keeping the Gram determinant as large as possible
    chosen: list[int] = []
    for _ in range(k):
        scores = []
        for i in range(m):
            if i in chosen:
                continue
            sub = [rows[j] for j in chosen + [i]]
            gram = [[sum(a * b for a, b in zip(r, s)) for s in sub] for r in sub]
            scores.append((_det_fraction(gram), -i))
        _, neg = max(scores)
        chosen.append(-neg)
    chosen.sort()
    return tuple(chosen), abs(int(_det_fraction([rows[i] for i in chosen])))


def solve_integer_linear_approx(sys: LinearFormSystem, point: Sequence, r) -> ApproxDecomposition:
    """Split a near-solution into kernel + (1/q)Z^D lattice + small remainder.

    ``point`` must map into Z + [-r, r] under every form.  Works in exact
    arithmetic: floats are read as the dyadic rationals they store, so pass
    Fractions when the precondition is tight.
    """
    D = sys.D
    p = [c if isinstance(c, Fraction) else Fraction(c) for c in point]
    r = r if isinstance(r, Fraction) else Fraction(r)
    if len(p) != D:
        raise DimensionMismatch(f"point dim {len(p)}, forms on R^{D}")
    for f in sys.forms:
        val = sum(c * x for c, x in zip(f, p))
        if abs(val - math.floor(val + Fraction(1, 2))) > r:
            raise PreconditionViolated(f"form {f} sends the point {float(abs(val - round(val))):.3g} from Z (> r)")
    red, pivots = _rref([[Fraction(c) for c in f] for f in sys.forms])
    rank = len(pivots)
    free = [j for j in range(D) if j not in pivots]
    zero = tuple(Fraction(0) for _ in range(D))
    M2 = sys.M_squared
    if rank == 0:
        return ApproxDecomposition(1, tuple(p), zero, zero, (), (), True, True)
    kernel = [Fraction(0)] * D
    for f in free:
        kernel[f] += p[f]
        for i, pc in enumerate(pivots):
            kernel[pc] -= red[i][f] * p[f]
    s = [a - b for a, b in zip(p, kernel)]
    restricted = [tuple(f[c] for c in pivots) for f in sys.forms]
    minor, q = _select_minor(restricted, rank)
    A = [restricted[i] for i in minor]
    s_piv = [s[c] for c in pivots]
    As = [sum(a * b for a, b in zip(row, s_piv)) for row in A]
    z = [math.floor(v + Fraction(1, 2)) for v in As]
    lat_piv = _solve_fraction(A, z)
    lattice = [Fraction(0)] * D
    for c, v in zip(pivots, lat_piv):
        lattice[c] = v
    remainder = [a - b for a, b in zip(s, lattice)]
    assert all((v * q).denominator == 1 for v in lattice)
    assert [k + l + e for k, l, e in zip(kernel, lattice, remainder)] == p
    rem2 = sum(v * v for v in remainder)
    rem_ok = rem2 <= Fraction(D**D) * M2 ** (D - 1) * r * r
    q_ok = q * q <= M2**D
    return ApproxDecomposition(q, tuple(kernel), tuple(lattice), tuple(remainder), minor, tuple(pivots), q_ok, rem_ok)


# ------------------------------------------------------------------ fixed points


def diagonalize_integer(A: list[list[int]]):
    """Unimodular U, V and diagonal-shaped S with U A V = S over Z."""
    m, n = len(A), len(A[0])
    S = [list(r) for r in A]
    U = [[int(i == j) for j in range(m)] for i in range(m)]
    V = [[int(i == j) for j in range(n)] for i in range(n)]

    def row_op(i, k, c):  # row_i -= c * row_k
        S[i] = [a - c * b for a, b in zip(S[i], S[k])]
        U[i] = [a - c * b for a, b in zip(U[i], U[k])]

    def col_op(j, k, c):  # col_j -= c * col_k
        for row in S:
            row[j] -= c * row[k]
        for row in V:
            row[j] -= c * row[k]

    def swap_rows(i, k):
        S[i], S[k] = S[k], S[i]
        U[i], U[k] = U[k], U[i]

    def swap_cols(j, k):
        for row in S:
            row[j], row[k] = row[k], row[j]
        for row in V:
            row[j], row[k] = row[k], row[j]

    for t in range(min(m, n)):
        while True:
            nz = [(abs(S[i][j]), i, j) for i in range(t, m) for j in range(t, n) if S[i][j] != 0]
            if not nz:
                return U, S, V
            _, i, j = min(nz)
            swap_rows(t, i)
            swap_cols(t, j)
            clean = True
            for i in range(t + 1, m):
                if S[i][t]:
                    row_op(i, t, S[i][t] // S[t][t])
                    clean = clean and S[i][t] == 0
            for j in range(t + 1, n):
                if S[t][j]:
                    col_op(j, t, S[t][j] // S[t][t])
                    clean = clean and S[t][j] == 0
            if clean:
                break
        if S[t][t] < 0:
            S[t] = [-v for v in S[t]]
            U[t] = [-v for v in U[t]]
    return U, S, V


def fixed_point_solve(spec: WalkSpec) -> TorusPoint | None:
    """A point fixed by every (gamma(w), u(w)), or None when none exists.

    Solves (gamma(w) - I) x = -u(w) mod Z^d for all w at once through a
    unimodular diagonalisation of the stacked integer system.
    """
    require_exact(spec)
    d = spec.dim
    rows, rhs = [], []
    for m, t in zip(spec.matrices, spec.translations):
        for i in range(d):
            rows.append([m.rows[i][j] - (i == j) for j in range(d)])
            rhs.append(-t.coords[i])
    U, S, V = diagonalize_integer(rows)
    c = [sum(a * b for a, b in zip(r, rhs)) for r in U]
    y = [Fraction(0)] * d
    for i in range(len(rows)):
        s = S[i][i] if i < d else 0
        if s == 0:
            if frac_mod1(c[i]) != 0:
                return None
        else:
            y[i] = c[i] / s
    x = [sum(Fraction(a) * b for a, b in zip(r, y)) for r in V]
    pt = TorusPoint.exact_point(x)
    for g in spec.generators():
        if g(pt) != pt:
            raise AssertionError("diagonalisation produced a non-fixed point")
    return pt


def concentration_probability(
    spec: WalkSpec, x: TorusPoint, y: TorusPoint, n: int, support_cap: int = DEFAULT_SUPPORT_CAP
) -> Fraction:
    """P^n{ w : (gamma,u)(w) x = y }, exactly."""
    require_exact(spec, x, y)
    if n == 0:
        return Fraction(int(x.coords == y.coords))
    mu = exact_pushforward(spec, FiniteMeasure.dirac(x), n, support_cap)
    return Fraction(mu.mass_at(y))
