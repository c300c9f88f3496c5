from fractions import Fraction

import hypothesis.strategies as st
from hypothesis import HealthCheck, settings

from toruslab.algebra import IntMatrix, TorusPoint

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def rationals(max_den: int = 12, lo: int = -3, hi: int = 3):
    return st.builds(
        lambda n, d: Fraction(n, d),
        st.integers(lo * max_den, hi * max_den),
        st.integers(1, max_den),
    )


def torus_points(dim: int = 2, max_den: int = 12):
    return st.lists(
        st.builds(lambda n, d: Fraction(n % d, d), st.integers(0, 10**6), st.integers(1, max_den)),
        min_size=dim,
        max_size=dim,
    ).map(TorusPoint.exact_point)


@st.composite
def sl2_matrices(draw, length: int = 4, max_power: int = 2):
    m = IntMatrix.identity(2)
    for i in range(draw(st.integers(0, length))):
        e = draw(st.integers(-max_power, max_power))
        m = IntMatrix.of([[1, e], [0, 1]] if i % 2 == 0 else [[1, 0], [e, 1]]) @ m
    return m
