"""scikit-learn style wrappers around the online detectors.

>>> from onlinecpd import ONNC
>>> cps = ONNC(n=10, n_epochs=10, lr=0.01).fit_predict(X)   # doctest: +SKIP
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils import check_array
from sklearn.utils.validation import check_is_fitted

from .core import TimeSeries
from .detect import DetectionResult, DetectorConfig, run_onnc, run_onnr


def check_series(X, start_index: int = 1) -> TimeSeries:
    """Validate array-like input as a finite (T, d) float series."""
    if isinstance(X, TimeSeries):
        return X
    X = np.asarray(X)
    if X.ndim == 1:
        X = X[:, None]
    X = check_array(X, dtype=np.float64, ensure_all_finite=True, ensure_min_samples=1)
    return TimeSeries(X, start_index=start_index)


class _OnlineDetector(BaseEstimator):
    _runner = None

    def _config(self) -> DetectorConfig:
        return DetectorConfig(k=self.k, n=self.n, l=self.l, n_epochs=self.n_epochs, lr=self.lr,
                              alpha=getattr(self, "alpha", 0.1), hidden=tuple(self.hidden),
                              activation=self.activation, scale=self.scale,
                              ratio_head=getattr(self, "ratio_head", "square"), seed=self.seed)

    def fit(self, X, y=None):
        """Run the detector over ``X`` (shape (T,) or (T, d)) in time order.

        Sets ``result_``, ``score_`` (offline-shifted), ``change_points_``
        (1-based positions) and ``threshold_``.
        """
        series = check_series(X)
        result: DetectionResult = type(self)._runner(series, self._config(), threshold=self.threshold,
                                                     min_distance=self.min_distance)
        self.n_features_in_ = series.d
        self.n_samples_fit_ = series.T
        self.result_ = result
        self.score_ = result.score
        self.change_points_ = result.detected_cps
        self.threshold_ = result.threshold
        return self

    def predict(self, X=None):
        """Detected change points; refits first when ``X`` is given."""
        if X is not None:
            self.fit(X)
        check_is_fitted(self, "change_points_")
        return self.change_points_

    def fit_predict(self, X, y=None):
        return self.fit(X).change_points_

    def transform(self, X=None):
        """Shifted score per observation, shape (T, 1).

        Each grid value is held until the next grid point; observations
        outside the scored range are NaN.
        """
        if X is not None:
            self.fit(X)
        check_is_fitted(self, "score_")
        T = self.n_samples_fit_
        out = np.full(T, np.nan)
        times, vals = self.score_.times, self.score_.smoothed
        step = self.score_.n
        for t, v in zip(times, vals):
            lo, hi = t - 1, min(t - 1 + step, T)
            if 0 <= lo < T:
                out[lo:hi] = v
        return out[:, None]

    def fit_transform(self, X, y=None):
        return self.transform(X)


class ONNC(_OnlineDetector):
    """Change-point detector with an online neural-network classifier.

    Parameters
    ----------
    k : int, default=1
        Autoregressive embedding depth.
    n : int, default=10
        Mini-batch size. Must divide ``l``.
    l : int, default=100
        Lag between the reference and the test mini-batch.
    n_epochs : int, default=10
        Adam steps on every mini-batch pair.
    lr : float, default=0.01
    hidden : tuple of int, default=(32,)
    activation : str, default="tanh"
    scale : {"running", "none"}, default="running"
        Standardise inputs with running statistics of past observations.
    threshold : float or None
        Minimum peak height. None uses four times the RMS of the negative
        part of the score, a noise level that the peaks do not inflate.
    min_distance : int or None
        Peak suppression radius; None means ``1.5 * l``.
    seed : int, default=0
    """

    _runner = staticmethod(run_onnc)

    def __init__(self, k=1, n=10, l=100, n_epochs=10, lr=0.01, hidden=(32,), activation="tanh",
                 scale="running", threshold=None, min_distance=None, seed=0):
        self.k = k
        self.n = n
        self.l = l
        self.n_epochs = n_epochs
        self.lr = lr
        self.hidden = hidden
        self.activation = activation
        self.scale = scale
        self.threshold = threshold
        self.min_distance = min_distance
        self.seed = seed


class ONNR(_OnlineDetector):
    """Change-point detector with two online density-ratio networks.

    Takes the same parameters as :class:`ONNC` plus ``alpha`` (default 0.1),
    the mixing weight of the relative density ratio, and ``ratio_head``
    (``"square"`` or ``"softplus"``), the nonnegative output of the ratio
    networks.
    """

    _runner = staticmethod(run_onnr)

    def __init__(self, k=1, n=10, l=100, n_epochs=10, lr=0.01, alpha=0.1, hidden=(32,),
                 activation="tanh", scale="running", ratio_head="square", threshold=None,
                 min_distance=None, seed=0):
        self.k = k
        self.n = n
        self.l = l
        self.n_epochs = n_epochs
        self.lr = lr
        self.alpha = alpha
        self.hidden = hidden
        self.activation = activation
        self.scale = scale
        self.ratio_head = ratio_head
        self.threshold = threshold
        self.min_distance = min_distance
        self.seed = seed
