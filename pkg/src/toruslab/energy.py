"""Energies, ball masses, drift (contraction) fits and r-separated decompositions."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .algebra import TorusPoint, torus_norm_array, wrap_unit
from .errors import SupportCapExceeded, ZeroMass
from .walk import (
    EmpiricalSample,
    FiniteMeasure,
    WalkSpec,
    counter_uniforms,
    draw_labels,
    exact_pushforward,
    simulate_points,
)

BALL_CHUNK = 4_000_000  # pairwise distances held in memory at once

__all__ = [
    "BallMass",
    "CHFit",
    "DecompositionCertificate",
    "EnergyParams",
    "MargulisRecord",
    "alpha_energy",
    "calibrate_C2",
    "checkerboard_decompose",
    "diagonal_mass",
    "dyadic_pairs",
    "fit_contraction",
    "margulis_inequality_check",
    "max_ball_mass",
    "pair_estimates",
]


@dataclass(frozen=True)
class EnergyParams:
    alpha: float
    lam: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not self.lam > 0:
            raise ValueError("lambda must be positive")


def alpha_energy(nu: FiniteMeasure, alpha: float, chunk: int = 2048) -> float:
    """Off-diagonal sum of w_i w_j d(x_i, x_j)^{-alpha} over distinct atoms."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    if nu.support_size == 1:
        return 0.0
    pts, ws = nu.points_array(), nu.weights_array()
    total = 0.0
    for s in range(0, len(pts), chunk):
        block = pts[s : s + chunk]
        dist = torus_norm_array(block[:, None, :] - pts[None, :, :])
        idx = np.arange(s, s + len(block))
        dist[np.arange(len(block)), idx] = np.inf
        with np.errstate(divide="ignore"):
            terms = dist ** (-alpha)
        total += float(ws[s : s + chunk] @ terms @ ws)
    return total


def diagonal_mass(nu: FiniteMeasure):
    """nu x nu of the diagonal: the sum of squared atom weights (exact when nu is)."""
    if nu.exact:
        return sum(w * w for w in nu.weights)
    ws = nu.weights_array()
    return float(ws @ ws)


@dataclass(frozen=True)
class BallMass:
    center: np.ndarray
    mass: float
    upper: float


def _bin_grid(pts: np.ndarray, rho: float):
    nb = max(1, math.ceil(1.0 / rho - 1e-12))
    bins = np.minimum(np.floor(pts / rho).astype(np.int64), nb - 1)
    return nb, bins


def _neighbourhood_masses(bins, ws, nb, d):
    """Per occupied bin its 3^d block mass, and the heaviest block over all bins."""
    keys, inv = np.unique(bins, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    mass = np.bincount(inv, weights=ws, minlength=len(keys))
    offsets = np.array(np.meshgrid(*([[-1, 0, 1]] * d), indexing="ij")).reshape(d, -1).T
    offsets = np.unique(np.mod(offsets, nb), axis=0)
    if nb**d <= 20_000_000:
        grid = np.zeros((nb,) * d)
        np.add.at(grid, tuple(keys.T), mass)
        block = np.zeros_like(grid)
        for off in offsets:
            block += np.roll(grid, tuple(-off), axis=tuple(range(d)))
        return keys, inv, block[tuple(keys.T)], float(block.max())
    lookup = {tuple(k): m for k, m in zip(keys, mass)}
    cand = {tuple(c) for k in keys for c in np.mod(k - offsets, nb)}

    def block_mass(c):
        return sum(lookup.get(tuple(x), 0.0) for x in np.mod(np.asarray(c) + offsets, nb))

    nbhd = np.array([block_mass(k) for k in keys])
    return keys, inv, nbhd, max(block_mass(c) for c in cand)


def _merge_atoms(pts: np.ndarray, ws: np.ndarray):
    uniq, inv = np.unique(pts, axis=0, return_inverse=True)
    return uniq, np.bincount(inv.reshape(-1), weights=ws, minlength=len(uniq))


def max_ball_mass(m: FiniteMeasure | EmpiricalSample, rho: float) -> BallMass:
    """Heaviest closed rho-ball centred at an atom, plus a box upper bound.

    Atoms are binned in boxes of side rho.  Any rho-ball lies in the 3^d block
    around the box of its centre, so the heaviest block bounds the supremum
    over all centres.  Bins are visited by decreasing block mass and exact
    ball masses are computed until no remaining block can beat the best.
    """
    if not rho > 0:
        raise ValueError("rho must be positive")
    pts, ws = _merge_atoms(wrap_unit(m.points_array().copy()), m.weights_array())
    d = pts.shape[1]
    nb, bins = _bin_grid(pts, rho)
    keys, inv, nbhd, upper = _neighbourhood_masses(bins, ws, nb, d)
    offsets = np.unique(np.mod(np.array(list(itertools.product((-1, 0, 1), repeat=d))), nb), axis=0)
    # equal weights: counting in a KD-tree avoids the pairwise distance blocks
    tree = cKDTree(pts, boxsize=1.0) if np.ptp(ws) == 0 else None
    radix = nb ** np.arange(d, dtype=np.int64)
    codes = bins @ radix
    best_mass, best_center = -1.0, None
    for i in np.argsort(-nbhd, kind="stable"):
        if nbhd[i] <= best_mass:
            break
        members = np.flatnonzero(inv == i)
        near = members if tree is not None else np.flatnonzero(np.isin(codes, np.mod(keys[i] + offsets, nb) @ radix))
        step = max(1, BALL_CHUNK // max(len(near), 1))
        start, width = 0, min(step, 64)
        while start < len(members) and best_mass < nbhd[i] - 1e-15:
            chunk = members[start : start + width]
            start, width = start + width, step
            if tree is not None:
                masses = tree.query_ball_point(pts[chunk], rho, return_length=True) * ws[0]
            else:
                diff = torus_norm_array(pts[chunk][:, None, :] - pts[near][None, :, :])
                masses = (diff <= rho) @ ws[near]
            j = int(np.argmax(masses))
            if masses[j] > best_mass:
                best_mass, best_center = float(masses[j]), pts[chunk[j]]
    return BallMass(best_center, best_mass, upper)


# ------------------------------------------------------------ contraction fits


@dataclass
class CHFit:
    m: int
    a_hat: float
    C_hat: float
    pair_count: int
    max_residual: float
    contracting: bool
    linear_pairs: int
    distances: np.ndarray = field(repr=False, default=None)
    estimates: np.ndarray = field(repr=False, default=None)


def dyadic_pairs(dim: int, n_pairs: int, seed: int, j_range=range(3, 21), n_dirs: int = 8):
    """Base points and difference vectors, half near-diagonal, half uniform.

    Near-diagonal pairs cycle through distances 2^{-j} and n_dirs directions in
    the first coordinate plane.
    """
    rng = np.random.default_rng(seed)
    base = rng.random((n_pairs, dim))
    diffs = np.empty((n_pairs, dim))
    n_near = (n_pairs + 1) // 2
    combos = [(j, k) for j in j_range for k in range(n_dirs)]
    for i in range(n_near):
        j, k = combos[i % len(combos)]
        v = np.zeros(dim)
        ang = 2 * math.pi * k / n_dirs
        if dim == 1:
            v[0] = 1.0 if k % 2 == 0 else -1.0
        else:
            v[0], v[1] = math.cos(ang), math.sin(ang)
        diffs[i] = v * 2.0 ** (-j)
    far = rng.random((n_pairs - n_near, dim)) - 0.5
    far[np.linalg.norm(far, axis=1) == 0] = 0.25
    diffs[n_near:] = far
    return base, diffs


def _word_products(spec: WalkSpec, m: int, N_walk: int, seed: int) -> np.ndarray:
    d = spec.dim
    G = spec.float_matrices
    prod = np.tile(np.eye(d), (N_walk, 1, 1))
    chains = np.arange(N_walk, dtype=np.uint64)
    for t in range(1, m + 1):
        prod = G[draw_labels(spec, seed, chains, t)] @ prod
    return prod


def pair_estimates(spec: WalkSpec, diffs: np.ndarray, alpha: float, m: int, N_walk: int, seed: int):
    """Monte Carlo E[d(gx, gy)^{-alpha}] under mu^{*m} for pairs y = x + v.

    Translations cancel in gy - gx = gamma v, so only the linear parts of the
    m-step words matter; all pairs share the same N_walk words.  Also returns
    whether each pair stayed in the linear regime (no coordinate of gamma v
    reached 1/2, so the torus distance equals the Euclidean one).
    """
    prods = _word_products(spec, m, N_walk, seed)
    img = np.einsum("wij,pj->pwi", prods, diffs)
    dist = torus_norm_array(img)
    est = np.mean(dist ** (-alpha), axis=1)
    linear = np.max(np.abs(img), axis=(1, 2)) < 0.5
    return est, linear


def fit_contraction(
    spec: WalkSpec,
    alpha: float,
    m: int,
    N_pairs: int = 1000,
    N_walk: int = 1000,
    seed: int = 0,
    pair_sampler: Callable | None = None,
) -> CHFit:
    """Fit E[V(gx, gy)] <= a V(x, y) + C for V = d^{-alpha} under mu^{*m}.

    a_hat is the largest ratio estimate / V over pairs in the linear regime,
    where the drift is multiplicative; C_hat is the smallest additive
    constant that then covers every sampled pair.
    """
    if not alpha > 0 or m < 1:
        raise ValueError("need alpha > 0 and m >= 1")
    sampler = pair_sampler or dyadic_pairs
    _, diffs = sampler(spec.dim, N_pairs, seed)
    d0 = torus_norm_array(diffs)
    V = d0 ** (-alpha)
    est, linear = pair_estimates(spec, diffs, alpha, m, N_walk, seed)
    if linear.any():
        a_hat = float(np.max(est[linear] / V[linear]))
    else:
        a_hat = float(np.max(est / V))
    resid = est - a_hat * V
    C_hat = max(0.0, float(resid.max()))
    return CHFit(m, a_hat, C_hat, len(diffs), float(np.max(resid - C_hat)), a_hat < 1, int(linear.sum()), d0, est)


# ------------------------------------------------------------ Margulis inequality


@dataclass(frozen=True)
class MargulisRecord:
    lhs: float
    rhs: float
    slack: float
    holds: bool
    ball_mass: float
    stderr: float
    diag: float
    energy: float
    method: str

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _mc_pushforward(spec: WalkSpec, nu: FiniteMeasure, n: int, N: int, seed: int) -> EmpiricalSample:
    cum = np.cumsum(nu.weights_array())
    cum /= cum[-1]
    u = counter_uniforms(seed, np.arange(N, dtype=np.uint64), 0)
    start = nu.points_array()[np.minimum(np.searchsorted(cum, u, side="right"), len(cum) - 1)]
    return EmpiricalSample(simulate_points(spec, start, n, N, seed), n, N, seed, spec.fingerprint)


def pushforward_ball_mass(
    spec: WalkSpec, nu: FiniteMeasure, n2: int, rho: float, N: int = 20_000, seed: int = 0, cap: int = 50_000
):
    """(max rho-ball mass of mu^{*n2} * nu, its Monte Carlo stderr, method)."""
    if spec.exact and nu.exact:
        try:
            pushed = exact_pushforward(spec, nu, n2, cap)
            return max_ball_mass(pushed, rho).mass, 0.0, "exact"
        except SupportCapExceeded:
            pass
    sample = _mc_pushforward(spec, nu, n2, N, seed)
    mass = max_ball_mass(sample, rho).mass
    return mass, math.sqrt(max(mass * (1 - mass), 0.0) / N), "monte-carlo"


def margulis_inequality_check(
    spec: WalkSpec,
    nu: FiniteMeasure,
    alpha: float,
    lam: float,
    n2: int,
    rho: float,
    C2: float,
    N: int = 20_000,
    seed: int = 0,
) -> MargulisRecord:
    """max_y (mu^{*n2}*nu)(B(y, rho))^2 against diag + (2 rho)^alpha (e^{-alpha lam n2} E_alpha + C2)."""
    if n2 < 1:
        raise ValueError("n2 must be at least 1")
    mass, se, method = pushforward_ball_mass(spec, nu, n2, rho, N, seed)
    diag = float(diagonal_mass(nu))
    energy = alpha_energy(nu, alpha)
    lhs = mass * mass
    rhs = diag + (2 * rho) ** alpha * (math.exp(-alpha * lam * n2) * energy + C2)
    return MargulisRecord(lhs, rhs, rhs - lhs, lhs <= rhs, mass, 2 * mass * se, diag, energy, method)


def calibrate_C2(cases: Sequence[tuple], alpha: float, lam: float, n2: int, N: int = 20_000, seed: int = 0) -> float:
    """Smallest C2 >= 0 making the Margulis inequality hold on every (spec, nu, rho) case."""
    c2 = 0.0
    for spec, nu, rho in cases:
        mass, _, _ = pushforward_ball_mass(spec, nu, n2, rho, N, seed)
        need = (mass * mass - float(diagonal_mass(nu))) / (2 * rho) ** alpha
        need -= math.exp(-alpha * lam * n2) * alpha_energy(nu, alpha)
        c2 = max(c2, need)
    return c2


# ------------------------------------------------------------ checkerboard


@dataclass(frozen=True)
class DecompositionCertificate:
    f_mass: float
    f_mass_prime: float
    diag_prime: float
    s_bound: float
    separation: float
    energy_prime: float | None
    color: tuple
    tiles_per_axis: int
    mass_ok: bool
    diag_ok: bool
    separated: bool

    @property
    def holds(self) -> bool:
        return self.mass_ok and self.diag_ok and self.separated


def tiles_per_axis(r: float) -> int:
    """Largest even K with 1/K >= r; then r <= side <= 2r for 0 < r <= 1/2."""
    K = int(math.floor(1.0 / r + 1e-12))
    K -= K % 2
    return max(K, 2)


def _min_pair_distance(pts: np.ndarray) -> float:
    if len(pts) < 2:
        return math.inf
    tree = cKDTree(wrap_unit(pts.copy()), boxsize=1.0)
    dd, _ = tree.query(wrap_unit(pts.copy()), k=2)
    return float(dd[:, 1].min())


def checkerboard_decompose(
    nu: FiniteMeasure,
    r: float,
    f: Callable[[np.ndarray], np.ndarray],
    seed: int = 0,
    alpha: float | None = None,
) -> tuple[FiniteMeasure, DecompositionCertificate]:
    """r-separated probability measure nu' keeping a 2^{-d} share of int f dnu.

    Tiles are boxes of side 1/K with K the largest even integer <= 1/r and
    are coloured by the parity of their index in each axis.  Distinct tiles of
    one colour are a full tile apart, hence r-separated, and each tile fits in
    a 3^d block of rho = r boxes, so its mass is at most the box bound s of
    the r-ball maximum.  The colour with the largest share of int f dnu is
    kept, one atom per tile (the atom maximising f, ties broken by ``seed``)
    carrying the tile's mass.
    """
    if not 0 < r < 0.5:
        raise ValueError("r must lie in (0, 1/2)")
    nu = nu.normalized()
    pts = wrap_unit(nu.points_array().copy())
    ws = nu.weights_array()
    d = pts.shape[1]
    fv = np.asarray(f(pts), dtype=float)
    if np.any(fv < 0) or np.any(fv > 1):
        raise ValueError("f must take values in [0, 1]")
    f_mass = float(ws @ fv)
    if f_mass <= 0:
        raise ZeroMass("int f dnu is zero")
    K = tiles_per_axis(r)
    tile = np.minimum(np.floor(pts * K).astype(np.int64), K - 1)
    colors = tile % 2
    color_codes = colors @ (2 ** np.arange(d))
    share = np.bincount(color_codes, weights=ws * fv, minlength=2**d)
    best = int(np.argmax(share))
    sel = np.flatnonzero(color_codes == best)
    rng = np.random.default_rng(seed)
    keys, inv = np.unique(tile[sel], axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    atoms = []
    for t in range(len(keys)):
        members = sel[inv == t]
        top = members[fv[members] == fv[members].max()]
        rep = int(rng.choice(top))
        atoms.append((rep, float(ws[members].sum())))
    total = sum(w for _, w in atoms)
    if nu.exact:
        wsum = {}
        exact_w = nu.weights
        for t in range(len(keys)):
            members = sel[inv == t]
            wsum[t] = sum(exact_w[i] for i in members)
        tot = sum(wsum.values())
        prime = FiniteMeasure.from_atoms((nu.points[atoms[t][0]], wsum[t] / tot) for t in range(len(keys)))
    else:
        prime = FiniteMeasure.from_atoms((TorusPoint.approx_point(pts[i]), w / total) for i, w in atoms)
    f_prime = float(prime.weights_array() @ np.asarray(f(wrap_unit(prime.points_array().copy())), dtype=float))
    diag_p = float(diagonal_mass(prime))
    s = max_ball_mass(nu, r).upper
    sep = _min_pair_distance(prime.points_array())
    energy = alpha_energy(prime, alpha) if alpha is not None else None
    cert = DecompositionCertificate(
        f_mass=f_mass,
        f_mass_prime=f_prime,
        diag_prime=diag_p,
        s_bound=s,
        separation=sep,
        energy_prime=energy,
        color=tuple(int(b) for b in np.binary_repr(best, width=d)[::-1]),
        tiles_per_axis=K,
        mass_ok=f_prime >= 2.0 ** (-d) * f_mass - 1e-12,
        diag_ok=diag_p <= 2.0**d * s / f_mass + 1e-12,
        separated=sep >= r,
    )
    return prime, cert
