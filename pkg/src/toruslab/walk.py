"""Affine random walks on T^d: specification, sampling, exact evolution.

Randomness comes from a counter-based generator: the label drawn by chain
``i`` at step ``t`` is a pure function of ``(seed, i, t)``.  Chains are
therefore reproducible one at a time, independent of how many run alongside,
and a run to step ``n`` contains every shorter run as its prefix.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

from .algebra import (
    AffineMap,
    IntMatrix,
    TorusPoint,
    frac_mod1,
    parse_rational,
    wrap_unit,
)
from .errors import (
    DeterminantNotOne,
    DimensionMismatch,
    ExactnessRequired,
    SupportCapExceeded,
    UnknownLabel,
    WeightsInvalid,
)

__all__ = [
    "EmpiricalSample",
    "FiniteMeasure",
    "LyapunovEstimate",
    "WalkSpec",
    "counter_uniforms",
    "draw_labels",
    "draw_word",
    "estimate_lyapunov",
    "exact_pushforward",
    "monte_carlo_measure",
    "sample_endpoint",
    "simulate_points",
    "validate_spec",
]

DEFAULT_SUPPORT_CAP = 10**6
FLOAT_MERGE_TOL = 1e-12
RENORM_EVERY = 32

_MASK64 = (1 << 64) - 1
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_STEP_KEY = np.uint64(0xD6E8FEB86659FD93)


def _splitmix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def counter_uniforms(seed: int, chains: np.ndarray, step: int) -> np.ndarray:
    """Uniform [0,1) draws keyed by (seed, chain index, step)."""
    chains = np.atleast_1d(np.asarray(chains, dtype=np.uint64))
    with np.errstate(over="ignore"):
        key = _splitmix(np.array([seed & _MASK64], dtype=np.uint64) ^ _GOLDEN)
        z = _splitmix(key + chains * _GOLDEN)
        z = _splitmix(z ^ (np.array([step & _MASK64], dtype=np.uint64) * _STEP_KEY + _GOLDEN))
    return (z >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)


@dataclass(frozen=True)
class WalkSpec:
    """Finite probability space (labels, weights) with maps gamma and u.

    ``matrices[i]`` and ``translations[i]`` belong to ``labels[i]``.  The
    spec is exact when every translation is exact.
    """

    labels: tuple
    weights: tuple
    matrices: tuple
    translations: tuple

    @classmethod
    def build(
        cls,
        labels: Sequence[str],
        weights: Sequence,
        matrices: Sequence,
        translations: Sequence | None = None,
        validate: bool = True,
    ) -> "WalkSpec":
        mats = tuple(m if isinstance(m, IntMatrix) else IntMatrix.of(m) for m in matrices)
        if translations is None:
            trans = tuple(TorusPoint.zero(mats[0].dim) for _ in mats)
        else:
            trans = tuple(_as_point(t) for t in translations)
        ws = tuple(parse_rational(w) for w in weights)
        spec = cls(tuple(str(l) for l in labels), ws, mats, trans)
        return validate_spec(spec) if validate else spec

    @property
    def dim(self) -> int:
        return self.matrices[0].dim

    @property
    def size(self) -> int:
        return len(self.labels)

    @property
    def exact(self) -> bool:
        return all(t.exact for t in self.translations)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError as exc:
            raise UnknownLabel(label) from exc

    def generator(self, label: str) -> AffineMap:
        i = self.index(label)
        return AffineMap(self.matrices[i], self.translations[i])

    def generators(self) -> list[AffineMap]:
        return [AffineMap(m, t) for m, t in zip(self.matrices, self.translations)]

    def with_translations(self, translations: Sequence) -> "WalkSpec":
        return WalkSpec.build(self.labels, self.weights, self.matrices, translations)

    @cached_property
    def float_matrices(self) -> np.ndarray:
        return np.stack([m.to_numpy() for m in self.matrices])

    @cached_property
    def float_translations(self) -> np.ndarray:
        return np.stack([t.as_array() for t in self.translations])

    @cached_property
    def cumulative_weights(self) -> np.ndarray:
        acc, out = Fraction(0), []
        for w in self.weights:
            acc += w
            out.append(float(acc))
        out[-1] = 1.0
        return np.array(out)

    def to_dict(self) -> dict:
        return {
            "labels": list(self.labels),
            "weights": [str(w) for w in self.weights],
            "matrices": [m.tolist() for m in self.matrices],
            "translations": [
                [str(c) for c in t.coords] if t.exact else [repr(c) for c in t.coords]
                for t in self.translations
            ],
        }

    @cached_property
    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _as_point(t) -> TorusPoint:
    if isinstance(t, TorusPoint):
        return t
    if isinstance(t, str):
        return TorusPoint.parse(t)
    vals = list(t)
    if any(isinstance(v, (float, np.floating)) for v in vals):
        return TorusPoint.approx_point(vals)
    return TorusPoint.exact_point(vals)


def validate_spec(spec: WalkSpec) -> WalkSpec:
    """Check the walk invariants; returns the spec unchanged when valid."""
    n = len(spec.labels)
    if n == 0:
        raise WeightsInvalid("need at least one label")
    if not (len(spec.weights) == len(spec.matrices) == len(spec.translations) == n):
        raise DimensionMismatch("labels, weights, matrices and translations differ in length")
    if len(set(spec.labels)) != n:
        raise WeightsInvalid("labels must be distinct")
    if any(w <= 0 for w in spec.weights):
        raise WeightsInvalid("every weight must be positive")
    if sum(spec.weights) != 1:
        raise WeightsInvalid(f"weights sum to {sum(spec.weights)}, not 1")
    d = spec.matrices[0].dim
    for m, t in zip(spec.matrices, spec.translations):
        if m.dim != d or t.dim != d:
            raise DimensionMismatch("all generators must act on the same T^d")
        if m.det() != 1:
            raise DeterminantNotOne(f"det = {m.det()} for {m.tolist()}")
    return spec


# ---------------------------------------------------------------- measures


def _float_key(coords: np.ndarray) -> tuple:
    q = np.round(np.asarray(coords) / FLOAT_MERGE_TOL).astype(np.int64)
    return tuple(int(v) % int(round(1 / FLOAT_MERGE_TOL)) for v in q)


@dataclass(frozen=True)
class FiniteMeasure:
    """Finitely supported positive measure on T^d with merged atoms."""

    points: tuple
    weights: tuple
    exact: bool = field(default=True)

    @classmethod
    def from_atoms(cls, atoms: Iterable[tuple[TorusPoint, object]]) -> "FiniteMeasure":
        atoms = list(atoms)
        if not atoms:
            raise ValueError("a finite measure needs at least one atom")
        exact = all(p.exact and isinstance(w, (Fraction, int)) for p, w in atoms)
        merged: dict = {}
        order: list = []
        for p, w in atoms:
            if exact:
                key, w = p.coords, Fraction(w)
            else:
                key, w = _float_key(p.as_array()), float(w)
            if w < 0:
                raise WeightsInvalid("atom weights must be nonnegative")
            if w == 0:
                continue
            if key in merged:
                merged[key][1] += w
            else:
                merged[key] = [p if exact else p.to_approx(), w]
                order.append(key)
        if not order:
            raise WeightsInvalid("measure has no positive atom")
        pts = tuple(merged[k][0] for k in order)
        ws = tuple(merged[k][1] for k in order)
        return cls(pts, ws, exact)

    @classmethod
    def dirac(cls, x: TorusPoint) -> "FiniteMeasure":
        return cls.from_atoms([(x, Fraction(1) if x.exact else 1.0)])

    @classmethod
    def uniform(cls, points: Sequence[TorusPoint]) -> "FiniteMeasure":
        if all(p.exact for p in points):
            w = Fraction(1, len(points))
        else:
            w = 1.0 / len(points)
        return cls.from_atoms((p, w) for p in points)

    @classmethod
    def from_arrays(cls, pts: np.ndarray, weights: np.ndarray | None = None) -> "FiniteMeasure":
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if weights is None:
            weights = np.full(len(pts), 1.0 / len(pts))
        return cls.from_atoms((TorusPoint.approx_point(p), float(w)) for p, w in zip(pts, weights))

    @property
    def dim(self) -> int:
        return self.points[0].dim

    @property
    def support_size(self) -> int:
        return len(self.points)

    @property
    def total_mass(self):
        return sum(self.weights)

    def points_array(self) -> np.ndarray:
        return np.stack([p.as_array() for p in self.points])

    def weights_array(self) -> np.ndarray:
        return np.array([float(w) for w in self.weights], dtype=float)

    def mass_at(self, y: TorusPoint):
        for p, w in zip(self.points, self.weights):
            if self.exact and y.exact:
                if p.coords == y.coords:
                    return w
            elif np.max(np.abs(p.as_array() - y.as_array())) <= FLOAT_MERGE_TOL:
                return w
        return Fraction(0) if self.exact else 0.0

    def normalized(self) -> "FiniteMeasure":
        total = self.total_mass
        return FiniteMeasure(self.points, tuple(w / total for w in self.weights), self.exact)

    def as_dict(self) -> dict:
        return {tuple(p.coords): w for p, w in zip(self.points, self.weights)}


@dataclass(frozen=True)
class EmpiricalSample:
    """N Monte Carlo endpoints of the walk, stored as a float array."""

    points: np.ndarray
    n_steps: int
    n_samples: int
    seed: int
    spec_fingerprint: str

    def __post_init__(self):
        if len(self.points) != self.n_samples:
            raise ValueError("n_samples must equal the number of points")

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def weights_array(self) -> np.ndarray:
        return np.full(self.n_samples, 1.0 / self.n_samples)

    def points_array(self) -> np.ndarray:
        return self.points


# ---------------------------------------------------------------- sampling


def draw_labels(spec: WalkSpec, seed: int, chains: np.ndarray, step: int) -> np.ndarray:
    u = counter_uniforms(seed, chains, step)
    idx = np.searchsorted(spec.cumulative_weights, u, side="right")
    return np.minimum(idx, spec.size - 1)


def draw_word(spec: WalkSpec, seed: int, n: int, chain: int = 0) -> tuple:
    """Labels (w_n, ..., w_1) drawn by one chain; step 1 is applied first."""
    idx = [int(draw_labels(spec, seed, np.array([chain]), t)[0]) for t in range(1, n + 1)]
    return tuple(spec.labels[i] for i in reversed(idx))


def simulate_points(
    spec: WalkSpec,
    x0: np.ndarray,
    n: int,
    n_chains: int,
    seed: int,
    record: Sequence[int] | None = None,
    chain_offset: int = 0,
):
    """Float simulation of ``n_chains`` walks from ``x0``.

    Returns the endpoint array, or a dict step -> array when ``record`` lists
    the steps to snapshot (step 0 is the start).
    """
    x0 = np.asarray(x0, dtype=float)
    if x0.ndim == 1:
        pts = np.tile(wrap_unit(x0.copy()), (n_chains, 1))
    else:
        pts = wrap_unit(x0.copy())
    chains = np.arange(chain_offset, chain_offset + len(pts), dtype=np.uint64)
    G, U = spec.float_matrices, spec.float_translations
    want = set(record) if record is not None else set()
    snaps = {}
    if 0 in want:
        snaps[0] = pts.copy()
    for t in range(1, n + 1):
        lab = draw_labels(spec, seed, chains, t)
        new = np.empty_like(pts)
        for k in range(spec.size):
            mask = lab == k
            if mask.any():
                new[mask] = pts[mask] @ G[k].T + U[k]
        pts = wrap_unit(new)
        if t in want:
            snaps[t] = pts.copy()
    if record is not None:
        return snaps
    return pts


def sample_endpoint(spec: WalkSpec, x: TorusPoint, n: int, seed: int, chain: int = 0) -> TorusPoint:
    """One draw of (gamma,u)(w) x with w ~ P^n; exact inputs give exact output."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    if x.dim != spec.dim:
        raise DimensionMismatch(f"point dim {x.dim}, spec dim {spec.dim}")
    if n == 0:
        return x
    if spec.exact and x.exact:
        word = draw_word(spec, seed, n, chain)
        y = x
        for letter in reversed(word):
            y = spec.generator(letter)(y)
        return y
    pts = simulate_points(spec, x.as_array(), n, 1, seed, chain_offset=chain)
    return TorusPoint.approx_point(pts[0])


def monte_carlo_measure(spec: WalkSpec, x: TorusPoint, n: int, N: int, seed: int) -> EmpiricalSample:
    if N < 1:
        raise ValueError("N must be at least 1")
    if x.dim != spec.dim:
        raise DimensionMismatch(f"point dim {x.dim}, spec dim {spec.dim}")
    pts = simulate_points(spec, x.as_array(), n, N, seed)
    return EmpiricalSample(pts, n, N, seed, spec.fingerprint)


# ---------------------------------------------------------------- exact evolution


def _step_exact(spec: WalkSpec, atoms: Mapping[tuple, Fraction]) -> dict:
    mats = [m.rows for m in spec.matrices]
    trans = [t.coords for t in spec.translations]
    out: dict = {}
    for pt, w in atoms.items():
        for rows, u, p in zip(mats, trans, spec.weights):
            img = tuple(frac_mod1(sum(a * b for a, b in zip(r, pt)) + ui) for r, ui in zip(rows, u))
            out[img] = out.get(img, 0) + p * w
    return out


def _step_float(spec: WalkSpec, atoms: Mapping[tuple, tuple]) -> dict:
    out: dict = {}
    G, U = spec.float_matrices, spec.float_translations
    pw = [float(w) for w in spec.weights]
    for key, (pt, w) in atoms.items():
        for k in range(spec.size):
            img = wrap_unit(G[k] @ pt + U[k])
            kk = _float_key(img)
            if kk in out:
                out[kk] = (out[kk][0], out[kk][1] + pw[k] * w)
            else:
                out[kk] = (img, pw[k] * w)
    return out


def exact_pushforward(
    spec: WalkSpec, nu: FiniteMeasure, steps: int, support_cap: int = DEFAULT_SUPPORT_CAP
) -> FiniteMeasure:
    """Apply nu -> sum_w P(w) (gamma,u)(w)_* nu ``steps`` times.

    Exact mode merges atoms on equality and keeps mass exactly; float mode
    merges atoms within 1e-12.
    """
    if steps < 0:
        raise ValueError("steps must be nonnegative")
    if nu.dim != spec.dim:
        raise DimensionMismatch(f"measure dim {nu.dim}, spec dim {spec.dim}")
    if nu.support_size > support_cap:
        raise SupportCapExceeded(f"initial support {nu.support_size} > cap {support_cap}")
    if steps == 0:
        return nu
    if spec.exact and nu.exact:
        atoms = {p.coords: w for p, w in zip(nu.points, nu.weights)}
        for _ in range(steps):
            atoms = _step_exact(spec, atoms)
            if len(atoms) > support_cap:
                raise SupportCapExceeded(f"support reached {len(atoms)} > cap {support_cap}")
        return FiniteMeasure(tuple(TorusPoint(k, True) for k in atoms), tuple(atoms.values()), True)
    fatoms = {_float_key(p.as_array()): (p.as_array(), float(w)) for p, w in zip(nu.points, nu.weights)}
    for _ in range(steps):
        fatoms = _step_float(spec, fatoms)
        if len(fatoms) > support_cap:
            raise SupportCapExceeded(f"support reached {len(fatoms)} > cap {support_cap}")
    pts = tuple(TorusPoint.approx_point(v[0]) for v in fatoms.values())
    return FiniteMeasure(pts, tuple(v[1] for v in fatoms.values()), False)


def require_exact(spec: WalkSpec, *points: TorusPoint) -> None:
    if not spec.exact or not all(p.exact for p in points):
        raise ExactnessRequired("this routine needs exact (rational) inputs")


# ---------------------------------------------------------------- Lyapunov


@dataclass(frozen=True)
class LyapunovEstimate:
    lambda1_hat: float
    standard_error: float
    n_steps: int
    n_chains: int


def estimate_lyapunov(
    spec: WalkSpec, n: int, N: int, seed: int, renorm_every: int = RENORM_EVERY
) -> LyapunovEstimate:
    """Average (1/n) log ||gamma(w_n) ... gamma(w_1)|| over N chains.

    The running product is rescaled every ``renorm_every`` steps and the
    scale is accumulated in log space, so no entry overflows.
    """
    if n < 1 or N < 1:
        raise ValueError("n and N must be positive")
    d = spec.dim
    G = spec.float_matrices
    prod = np.tile(np.eye(d), (N, 1, 1))
    logs = np.zeros(N)
    chains = np.arange(N, dtype=np.uint64)
    for t in range(1, n + 1):
        lab = draw_labels(spec, seed, chains, t)
        prod = G[lab] @ prod
        if t % renorm_every == 0:
            s = np.linalg.norm(prod, axis=(1, 2))
            prod /= s[:, None, None]
            logs += np.log(s)
    logs += np.log(np.linalg.norm(prod, ord=2, axis=(1, 2)))
    vals = logs / n
    se = float(np.std(vals, ddof=1) / math.sqrt(N)) if N > 1 else 0.0
    return LyapunovEstimate(float(np.mean(vals)), se, n, N)
