"""scikit-learn style wrappers around the Monte Carlo estimators.

Each wrapper takes its hyperparameters in ``__init__`` (so ``get_params`` and
``clone`` work) and learns fitted attributes, suffixed with an underscore, in
``fit``.  The "data" passed to ``fit`` is a walk specification, optionally
with a start point or a list of calibration cases.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .algebra import TorusPoint
from .energy import calibrate_C2, fit_contraction, margulis_inequality_check
from .spectral import decay_scan
from .walk import WalkSpec, estimate_lyapunov

__all__ = ["ContractionFitter", "DecayRateEstimator", "LyapunovEstimator", "MargulisCalibrator"]


class LyapunovEstimator(BaseEstimator):
    """Top Lyapunov exponent of the linear parts.

    Args:
        n_steps: Word length per chain.
        n_chains: Number of independent chains.
        seed: Counter RNG seed.

    Attributes:
        lambda1_: Mean of (1/n) log ||product||.
        stderr_: Standard error across chains.
    """

    def __init__(self, n_steps: int = 10_000, n_chains: int = 32, seed: int = 0):
        self.n_steps = n_steps
        self.n_chains = n_chains
        self.seed = seed

    def fit(self, X: WalkSpec, y=None) -> "LyapunovEstimator":
        est = estimate_lyapunov(X, self.n_steps, self.n_chains, self.seed)
        self.lambda1_ = est.lambda1_hat
        self.stderr_ = est.standard_error
        return self

    def predict(self, n) -> np.ndarray:
        """Predicted log-norm growth lambda1 * n."""
        check_is_fitted(self, "lambda1_")
        return self.lambda1_ * np.asarray(n, dtype=float)


class ContractionFitter(BaseEstimator):
    """Fit E V(gx, gy) <= a V(x, y) + C for V = d^{-alpha}.

    Attributes:
        a_: Contraction factor.
        C_: Additive constant.
        fit_: The full fit record.
    """

    def __init__(self, alpha: float = 0.05, m: int = 20, n_pairs: int = 1000, n_walk: int = 1000, seed: int = 0):
        self.alpha = alpha
        self.m = m
        self.n_pairs = n_pairs
        self.n_walk = n_walk
        self.seed = seed

    def fit(self, X: WalkSpec, y=None) -> "ContractionFitter":
        self.fit_ = fit_contraction(X, self.alpha, self.m, self.n_pairs, self.n_walk, self.seed)
        self.a_ = self.fit_.a_hat
        self.C_ = self.fit_.C_hat
        return self

    def predict(self, distances) -> np.ndarray:
        """Upper bound a d^{-alpha} + C for the expected m-step value."""
        check_is_fitted(self, "a_")
        d = np.asarray(distances, dtype=float)
        return self.a_ * d ** (-self.alpha) + self.C_


class DecayRateEstimator(BaseEstimator):
    """Exponential rate of |Fourier coefficient| along the walk.

    Attributes:
        rate_: Fitted c in |value| ~ exp(b - c n), or nan without signal.
        intercept_: Fitted b.
        report_: The underlying scan.
    """

    def __init__(self, a: Sequence[int] = (1, 0), n_list: Sequence[int] = tuple(range(0, 61, 5)), n_samples: int = 10_000, seed: int = 0):
        self.a = a
        self.n_list = n_list
        self.n_samples = n_samples
        self.seed = seed

    def fit(self, X: WalkSpec, y: TorusPoint) -> "DecayRateEstimator":
        self.report_ = decay_scan(X, y, self.a, list(self.n_list), self.n_samples, self.seed)
        fit = self.report_.fitted_rate
        self.rate_, self.intercept_ = fit if fit is not None else (float("nan"), float("nan"))
        return self

    def predict(self, n) -> np.ndarray:
        check_is_fitted(self, "rate_")
        return np.exp(self.intercept_ - self.rate_ * np.asarray(n, dtype=float))


class MargulisCalibrator(BaseEstimator):
    """Calibrate C2 on (spec, nu, rho) cases, then check held-out cases.

    Attributes:
        C2_: Smallest constant covering every calibration case.
    """

    def __init__(self, alpha: float = 0.1, lam: float = 0.1, n2: int = 5, n_samples: int = 20_000, seed: int = 0):
        self.alpha = alpha
        self.lam = lam
        self.n2 = n2
        self.n_samples = n_samples
        self.seed = seed

    def fit(self, X: Sequence[tuple], y=None) -> "MargulisCalibrator":
        self.C2_ = calibrate_C2(X, self.alpha, self.lam, self.n2, self.n_samples, self.seed)
        return self

    def check(self, X: Sequence[tuple]) -> list:
        """Margulis records for each (spec, nu, rho) case at the fitted C2."""
        check_is_fitted(self, "C2_")
        return [
            margulis_inequality_check(s, nu, self.alpha, self.lam, self.n2, rho, self.C2_, self.n_samples, self.seed)
            for s, nu, rho in X
        ]

    def score(self, X: Sequence[tuple], y=None) -> float:
        """Fraction of cases where the inequality holds."""
        recs = self.check(X)
        return float(np.mean([r.holds for r in recs]))
