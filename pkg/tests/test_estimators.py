import math
from fractions import Fraction

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from toruslab.algebra import TorusPoint
from toruslab.estimators import ContractionFitter, DecayRateEstimator, LyapunovEstimator, MargulisCalibrator
from toruslab.specs import std_sl2
from toruslab.walk import FiniteMeasure, WalkSpec


def test_params_roundtrip_and_clone():
    est = ContractionFitter(alpha=0.2, m=3)
    assert est.get_params()["alpha"] == 0.2
    est.set_params(m=4)
    twin = clone(est)
    assert twin.get_params() == est.get_params() and twin is not est


@pytest.mark.parametrize("est, arg", [(LyapunovEstimator(), 10), (ContractionFitter(), [0.1]), (DecayRateEstimator(), [1])])
def test_unfitted_predict_raises(est, arg):
    with pytest.raises(NotFittedError):
        est.predict(arg)


def test_lyapunov_estimator_hyperbolic():
    spec = WalkSpec.build(["A"], ["1"], [[[2, 1], [1, 1]]])
    est = LyapunovEstimator(n_steps=200, n_chains=4).fit(spec)
    assert est.lambda1_ == pytest.approx(math.log((3 + math.sqrt(5)) / 2), abs=1e-2)
    assert est.predict([0, 10])[1] == pytest.approx(10 * est.lambda1_)


def test_contraction_fitter_isometry():
    spec = WalkSpec.build(["a"], ["1"], [[[1, 0], [0, 1]]], [["1/3", "1/5"]])
    est = ContractionFitter(alpha=0.3, m=2, n_pairs=50, n_walk=10).fit(spec)
    assert est.a_ == pytest.approx(1, abs=1e-9) and est.C_ <= 1e-9
    assert est.predict([0.5])[0] == pytest.approx(0.5**-0.3, rel=1e-8)


def test_decay_rate_estimator():
    x = TorusPoint.approx_point([math.sqrt(2) % 1, math.sqrt(3) % 1])
    est = DecayRateEstimator(n_list=range(0, 16), n_samples=20_000).fit(std_sl2(), x)
    assert est.rate_ > 0
    assert est.predict([0])[0] == pytest.approx(math.exp(est.intercept_))
    trapped = DecayRateEstimator(a=(3, 0), n_list=range(0, 6)).fit(std_sl2(), TorusPoint.exact_point(["1/3", "2/3"]))
    assert trapped.rate_ == 0


def test_margulis_calibrator():
    spec = std_sl2()
    pt = lambda *c: TorusPoint.exact_point([Fraction(v) for v in c])
    lat = FiniteMeasure.uniform([pt(Fraction(i, 3), Fraction(j, 3)) for i in range(3) for j in range(3)])
    cases = [(spec, lat, 0.05), (spec, FiniteMeasure.dirac(pt(Fraction(1, 7), 0)), 0.1)]
    cal = MargulisCalibrator(n2=2).fit(cases)
    assert cal.C2_ >= 0 and cal.score(cases) == 1.0
    assert all(r.holds for r in cal.check(cases))
