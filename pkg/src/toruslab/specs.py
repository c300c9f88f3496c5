"""Built-in example systems."""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from .algebra import IntMatrix, TorusPoint
from .fp import FpWalkSpec
from .walk import WalkSpec

__all__ = ["NAMED_SPECS", "fp_fixedpoint", "hyperbolic_pair", "named", "std_sl2", "trapped_q3"]

UPPER = ((1, 1), (0, 1))
LOWER = ((1, 0), (1, 1))
CAT = ((2, 1), (1, 1))


def std_sl2(translations=None) -> WalkSpec:
    """Uniform walk on the elementary generators of SL_2(Z)."""
    return WalkSpec.build(["a", "b"], ["1/2", "1/2"], [UPPER, LOWER], translations)


def hyperbolic_pair(translations=None) -> WalkSpec:
    """Uniform walk on [[2,1],[1,1]] and its transpose (both symmetric, so equal)."""
    return WalkSpec.build(["a", "b"], ["1/2", "1/2"], [CAT, IntMatrix.of(CAT).T.rows], translations)


def trapped_q3() -> tuple[WalkSpec, TorusPoint]:
    """std-sl2 started at (1/3, 2/3), an orbit of height 3."""
    return std_sl2(), TorusPoint.exact_point(["1/3", "2/3"])


def fp_fixedpoint(p: int = 5, x0=(2, 3)) -> FpWalkSpec:
    """std-sl2 mod p with u(w) = (I - gamma(w)) x0, so x0 is fixed by every step."""
    x = np.array(x0, dtype=np.int64)
    trans = [tuple(int(v) for v in (x - np.array(m) @ x) % p) for m in (UPPER, LOWER)]
    return FpWalkSpec.build(p, ["a", "b"], ["1/2", "1/2"], [UPPER, LOWER], trans)


NAMED_SPECS = {
    "std-sl2": lambda: (std_sl2(), None),
    "hyperbolic-pair": lambda: (hyperbolic_pair(), None),
    "trapped-q3": trapped_q3,
    "fp-fixedpoint": lambda: (fp_fixedpoint(), (2, 3)),
}


def named(name: str):
    """(spec, default start point or None) for a built-in name."""
    try:
        return NAMED_SPECS[name]()
    except KeyError:
        raise KeyError(f"unknown spec {name!r}; choose from {sorted(NAMED_SPECS)}") from None
