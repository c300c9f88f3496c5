"""Exact and floating arithmetic on the torus R^d/Z^d.

Points, integer matrices and affine maps are immutable values.  Every
geometric routine has an exact path (``fractions.Fraction`` coordinates,
Python integers for matrix entries) and a floating path; the exact one is
the reference the tests check the fast one against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from numbers import Integral, Rational
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import DimensionMismatch, UnknownLabel

__all__ = [
    "AffineMap",
    "IntMatrix",
    "NormBracket",
    "TorusPoint",
    "apply_affine",
    "compose_word",
    "frac_mod1",
    "operator_norm_bounds",
    "parse_rational",
    "reduce_mod1",
    "torus_distance",
    "torus_norm_array",
    "wrap_unit",
]


def parse_rational(value) -> Fraction:
    """Coerce ints, Fractions and ``"num/den"`` strings to a Fraction.

    Floats are rejected: an exact coordinate must be given exactly.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise TypeError("booleans are not rationals")
    if isinstance(value, (Integral, Rational)):
        return Fraction(value)
    if isinstance(value, str):
        return Fraction(value.strip())
    raise TypeError(f"cannot read {value!r} as an exact rational")


def frac_mod1(v: Fraction) -> Fraction:
    return v - math.floor(v)


def wrap_unit(arr: np.ndarray) -> np.ndarray:
    """Reduce floats into [0, 1); ``np.mod`` can round tiny negatives up to 1.0."""
    out = np.mod(arr, 1.0)
    out[out >= 1.0] = 0.0
    return out


@dataclass(frozen=True)
class TorusPoint:
    """A point of T^d, stored either as reduced fractions or as floats."""

    coords: tuple
    exact: bool

    def __post_init__(self):
        if len(self.coords) == 0:
            raise ValueError("a torus point needs at least one coordinate")
        for c in self.coords:
            if self.exact and not isinstance(c, Fraction):
                raise TypeError("exact coordinates must be Fractions")
            if not 0 <= c < 1:
                raise ValueError(f"coordinate {c} not in [0, 1)")

    @classmethod
    def exact_point(cls, values: Iterable) -> "TorusPoint":
        return cls(tuple(frac_mod1(parse_rational(v)) for v in values), True)

    @classmethod
    def approx_point(cls, values: Iterable[float]) -> "TorusPoint":
        arr = wrap_unit(np.asarray(list(values), dtype=float))
        return cls(tuple(float(c) for c in arr), False)

    @classmethod
    def zero(cls, dim: int) -> "TorusPoint":
        return cls((Fraction(0),) * dim, True)

    @classmethod
    def parse(cls, text: str, exact: bool | None = None) -> "TorusPoint":
        """Read ``"1/3,2/3"`` (exact) or ``"0.25,0.5"`` (float)."""
        parts = [p.strip() for p in text.split(",") if p.strip()]
        if exact is None:
            exact = not any(("." in p or "e" in p.lower()) for p in parts)
        if exact:
            return cls.exact_point(parts)
        return cls.approx_point(float(Fraction(p)) if "/" in p else float(p) for p in parts)

    @property
    def dim(self) -> int:
        return len(self.coords)

    def as_array(self) -> np.ndarray:
        return np.array([float(c) for c in self.coords], dtype=float)

    def to_approx(self) -> "TorusPoint":
        return self if not self.exact else TorusPoint.approx_point(self.as_array())

    def to_exact(self) -> "TorusPoint":
        """Exact copy; floats convert to the dyadic rational they store."""
        if self.exact:
            return self
        return TorusPoint(tuple(Fraction(c) for c in self.coords), True)

    def __str__(self) -> str:
        return ",".join(str(c) for c in self.coords)


def reduce_mod1(v: Sequence) -> TorusPoint:
    """Canonical representative in [0,1)^d of a vector of R^d/Z^d."""
    if any(isinstance(c, (float, np.floating)) for c in v):
        return TorusPoint.approx_point(float(c) for c in v)
    return TorusPoint.exact_point(v)


def _det_bareiss(rows: list[list[int]]) -> int:
    n = len(rows)
    a = [list(r) for r in rows]
    sign, prev = 1, 1
    for k in range(n - 1):
        if a[k][k] == 0:
            swap = next((i for i in range(k + 1, n) if a[i][k] != 0), None)
            if swap is None:
                return 0
            a[k], a[swap] = a[swap], a[k]
            sign = -sign
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                a[i][j] = (a[i][j] * a[k][k] - a[i][k] * a[k][j]) // prev
        prev = a[k][k]
    return sign * a[n - 1][n - 1]


@dataclass(frozen=True)
class IntMatrix:
    """Square matrix with arbitrary-precision integer entries."""

    rows: tuple

    def __post_init__(self):
        d = len(self.rows)
        if d == 0 or any(len(r) != d for r in self.rows):
            raise DimensionMismatch("IntMatrix must be square and non-empty")
        for r in self.rows:
            for e in r:
                if not isinstance(e, int) or isinstance(e, bool):
                    raise TypeError("IntMatrix entries must be Python ints")

    @classmethod
    def of(cls, rows: Iterable[Iterable]) -> "IntMatrix":
        return cls(tuple(tuple(int(e) for e in r) for r in rows))

    @classmethod
    def identity(cls, dim: int) -> "IntMatrix":
        return cls(tuple(tuple(int(i == j) for j in range(dim)) for i in range(dim)))

    @property
    def dim(self) -> int:
        return len(self.rows)

    def det(self) -> int:
        return _det_bareiss([list(r) for r in self.rows])

    @property
    def T(self) -> "IntMatrix":
        return IntMatrix(tuple(zip(*self.rows)))

    def __matmul__(self, other: "IntMatrix") -> "IntMatrix":
        if other.dim != self.dim:
            raise DimensionMismatch(f"{self.dim} vs {other.dim}")
        cols = list(zip(*other.rows))
        return IntMatrix(tuple(tuple(sum(a * b for a, b in zip(r, c)) for c in cols) for r in self.rows))

    def __add__(self, other: "IntMatrix") -> "IntMatrix":
        return IntMatrix(tuple(tuple(a + b for a, b in zip(r, s)) for r, s in zip(self.rows, other.rows)))

    def __sub__(self, other: "IntMatrix") -> "IntMatrix":
        return IntMatrix(tuple(tuple(a - b for a, b in zip(r, s)) for r, s in zip(self.rows, other.rows)))

    def __neg__(self) -> "IntMatrix":
        return IntMatrix(tuple(tuple(-a for a in r) for r in self.rows))

    def matvec(self, v: Sequence) -> list:
        if len(v) != self.dim:
            raise DimensionMismatch(f"matrix dim {self.dim}, vector dim {len(v)}")
        return [sum(a * b for a, b in zip(r, v)) for r in self.rows]

    def to_numpy(self) -> np.ndarray:
        return np.array([[float(e) for e in r] for r in self.rows], dtype=float)

    def tolist(self) -> list[list[int]]:
        return [list(r) for r in self.rows]


@dataclass(frozen=True)
class AffineMap:
    """x -> linear @ x + translation on T^d."""

    linear: IntMatrix
    translation: TorusPoint

    def __post_init__(self):
        if self.linear.dim != self.translation.dim:
            raise DimensionMismatch("translation and linear part disagree on dimension")

    @classmethod
    def identity(cls, dim: int) -> "AffineMap":
        return cls(IntMatrix.identity(dim), TorusPoint.zero(dim))

    @property
    def dim(self) -> int:
        return self.linear.dim

    @property
    def exact(self) -> bool:
        return self.translation.exact

    def __call__(self, x: TorusPoint) -> TorusPoint:
        return apply_affine(self, x)

    def __matmul__(self, other: "AffineMap") -> "AffineMap":
        """Composition ``self o other`` (apply ``other`` first)."""
        if other.dim != self.dim:
            raise DimensionMismatch(f"{self.dim} vs {other.dim}")
        shifted = apply_affine(AffineMap(self.linear, self.translation), other.translation)
        return AffineMap(self.linear @ other.linear, shifted)


def apply_affine(g: AffineMap, x: TorusPoint) -> TorusPoint:
    if g.dim != x.dim:
        raise DimensionMismatch(f"map dim {g.dim}, point dim {x.dim}")
    if g.exact and x.exact:
        image = g.linear.matvec(x.coords)
        return TorusPoint.exact_point(a + b for a, b in zip(image, g.translation.coords))
    image = g.linear.to_numpy() @ x.as_array() + g.translation.as_array()
    return TorusPoint.approx_point(image)


def compose_word(spec, word: Sequence[str]) -> AffineMap:
    """Compose the letters of ``word = (w_n, ..., w_1)`` left to right.

    The result applies ``w_1`` first, so pushing the product measure on words
    forward through this map gives the n-fold convolution of the walk law.
    """
    if len(word) == 0:
        raise ValueError("word must be non-empty")
    maps = []
    for letter in word:
        try:
            maps.append(spec.generator(letter))
        except KeyError as exc:
            raise UnknownLabel(letter) from exc
    out = maps[0]
    for g in maps[1:]:
        out = out @ g
    return out


def _coord_gap(a, b):
    delta = abs(a - b) % 1
    return min(delta, 1 - delta)


def torus_distance(x: TorusPoint, y: TorusPoint) -> float:
    """Euclidean quotient metric: per-axis wrap distance, then the l2 norm."""
    if x.dim != y.dim:
        raise DimensionMismatch(f"{x.dim} vs {y.dim}")
    if x.exact and y.exact:
        sq = sum(_coord_gap(a, b) ** 2 for a, b in zip(x.coords, y.coords))
        return math.sqrt(sq)
    diff = x.as_array() - y.as_array()
    return float(torus_norm_array(diff))


def torus_norm_array(diff: np.ndarray) -> np.ndarray:
    """Quotient norm of displacement vectors along the last axis."""
    r = np.abs(np.mod(diff, 1.0))
    r = np.minimum(r, 1.0 - r)
    return np.sqrt(np.sum(r * r, axis=-1))


class NormBracket(NamedTuple):
    lower: float
    upper: float
    estimate: float


def operator_norm_bounds(m: IntMatrix, iters: int = 500, tol: float = 1e-14) -> NormBracket:
    """Certified bracket on the l2 operator norm plus a power-iteration value.

    lower is the largest column norm, upper the Frobenius norm.  Accepts any
    integer matrix, not only SL_d(Z) elements.
    """
    a = m.to_numpy()
    lower = float(np.max(np.linalg.norm(a, axis=0)))
    upper = float(np.linalg.norm(a))
    if upper == 0.0:
        return NormBracket(0.0, 0.0, 0.0)
    gram = a.T @ a
    # start on the heaviest column so the estimate never falls below `lower`
    v = np.zeros(m.dim)
    v[int(np.argmax(np.linalg.norm(a, axis=0)))] = 1.0
    sigma2 = float(v @ gram @ v)
    for _ in range(iters):
        w = gram @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            break
        v = w / nw
        new = float(v @ gram @ v)
        if abs(new - sigma2) <= tol * max(new, 1.0):
            sigma2 = max(sigma2, new)
            break
        sigma2 = max(sigma2, new)
    est = min(max(math.sqrt(sigma2), lower), upper)
    return NormBracket(lower, upper, est)
