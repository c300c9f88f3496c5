import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import rationals, sl2_matrices, torus_points
from toruslab.algebra import (
    AffineMap,
    IntMatrix,
    TorusPoint,
    apply_affine,
    compose_word,
    operator_norm_bounds,
    parse_rational,
    reduce_mod1,
    torus_distance,
)
from toruslab.errors import DeterminantNotOne
from toruslab.walk import WalkSpec

F = Fraction


def pt(*c):
    return TorusPoint.exact_point(c)


@pytest.mark.parametrize(
    "v, expected",
    [((F(3, 2), F(-1, 3)), (F(1, 2), F(2, 3))), ((0, 0), (0, 0)), ((F(7, 3), F(5, 2)), (F(1, 3), F(1, 2)))],
)
def test_reduce_mod1_examples(v, expected):
    assert reduce_mod1(v).coords == tuple(expected)


def test_parse_rational_forms():
    assert parse_rational("3/6") == F(1, 2)
    assert parse_rational(" -4 ") == -4
    with pytest.raises(TypeError):
        parse_rational(0.5)


def test_apply_affine_examples():
    ident = AffineMap(IntMatrix.identity(2), pt(0, 0))
    assert apply_affine(ident, pt(F(1, 3), F(2, 3))) == pt(F(1, 3), F(2, 3))
    shear = AffineMap(IntMatrix.of([[1, 1], [0, 1]]), pt(0, 0))
    assert apply_affine(shear, pt(F(1, 3), F(2, 3))) == pt(0, F(2, 3))
    cat = AffineMap(IntMatrix.of([[2, 1], [1, 1]]), pt(F(1, 2), 0))
    # oracle: (2/4 + 0 + 1/2, 1/4 + 0) = (1, 1/4) -> (0, 1/4)
    assert apply_affine(cat, pt(F(1, 4), 0)) == pt(0, F(1, 4))


def test_compose_word_examples():
    spec = WalkSpec.build(["w"], ["1"], [[[1, 0], [0, 1]]], [["1/4", "0"]])
    g = compose_word(spec, ["w"])
    assert g.linear == IntMatrix.identity(2) and g.translation == pt(F(1, 4), 0)
    assert compose_word(spec, ["w", "w"]).translation == pt(F(1, 2), 0)
    std = WalkSpec.build(["w1", "w2"], ["1/2", "1/2"], [[[1, 1], [0, 1]], [[1, 0], [1, 1]]])
    # letters are listed (w_n, ..., w_1): the last one acts first
    assert compose_word(std, ["w1", "w2"]).linear == IntMatrix.of([[2, 1], [1, 1]])
    assert compose_word(std, ["w2", "w1"]).linear == IntMatrix.of([[1, 1], [1, 2]])


def test_torus_distance_examples():
    assert torus_distance(pt(F(1, 3), 0), pt(F(1, 3), 0)) == 0
    assert torus_distance(pt(0, 0), pt(F(1, 2), 0)) == 0.5
    d = torus_distance(TorusPoint.approx_point([0.9, 0.0]), TorusPoint.approx_point([0.1, 0.0]))
    assert d == pytest.approx(0.2, abs=1e-15)


def test_operator_norm_examples():
    b = operator_norm_bounds(IntMatrix.identity(2))
    assert b.lower <= 1 <= b.upper and b.estimate == pytest.approx(1)
    b = operator_norm_bounds(IntMatrix.of([[2, 1], [1, 1]]))
    assert abs(b.estimate - (3 + math.sqrt(5)) / 2) <= 1e-9
    assert operator_norm_bounds(IntMatrix.of([[2, 0], [0, 1]])).estimate == pytest.approx(2)


def test_affine_map_rejects_non_unimodular():
    with pytest.raises(DeterminantNotOne):
        WalkSpec.build(["x"], ["1"], [[[2, 0], [0, 1]]])


@given(st.lists(rationals(), min_size=2, max_size=3))
def test_reduce_mod1_idempotent(v):
    once = reduce_mod1(v)
    assert reduce_mod1(once.coords) == once
    assert all(0 <= c < 1 for c in once.coords)


@given(sl2_matrices(), sl2_matrices(), torus_points(), torus_points(), torus_points())
def test_composition_matches_sequential_application(a, b, ua, ub, x):
    g, h = AffineMap(a, ua), AffineMap(b, ub)
    assert apply_affine(g, apply_affine(h, x)) == apply_affine(g @ h, x)


@given(torus_points(), torus_points(), st.lists(st.integers(-5, 5), min_size=2, max_size=2))
def test_distance_ignores_integer_lifts(x, y, shift):
    lifted = TorusPoint.exact_point([c + s for c, s in zip(x.coords, shift)])
    assert torus_distance(lifted, y) == torus_distance(x, y)
    assert torus_distance(x, y) <= math.sqrt(2) / 2 + 1e-15


@given(st.lists(st.sampled_from(["a", "b", "c"]), min_size=1, max_size=5),
       st.lists(st.sampled_from(["a", "b", "c"]), min_size=1, max_size=5))
def test_compose_word_of_concatenation(w1, w2):
    spec = WalkSpec.build(
        ["a", "b", "c"], ["1/3"] * 3, [[[1, 1], [0, 1]], [[1, 0], [1, 1]], [[2, 1], [1, 1]]],
        [["1/2", "0"], ["1/3", "1/5"], ["0", "0"]],
    )
    whole = compose_word(spec, w1 + w2)
    parts = compose_word(spec, w1) @ compose_word(spec, w2)
    assert whole.linear == parts.linear and whole.translation == parts.translation


@given(st.lists(st.lists(st.integers(-20, 20), min_size=3, max_size=3), min_size=3, max_size=3))
def test_norm_bracket_is_ordered(rows):
    b = operator_norm_bounds(IntMatrix.of(rows))
    assert b.lower <= b.estimate <= b.upper
    assert b.estimate == pytest.approx(np.linalg.norm(np.array(rows, float), 2), rel=1e-9, abs=1e-12)


def test_exact_entries_do_not_overflow():
    spec = WalkSpec.build(["a"], ["1"], [[[2, 1], [1, 1]]])
    g = compose_word(spec, ["a"] * 100)
    assert g.linear.det() == 1 and g.linear.rows[0][0] > 2**63
