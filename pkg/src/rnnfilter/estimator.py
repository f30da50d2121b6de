"""scikit-learn style wrapper around training and prediction."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.exceptions import NotFittedError

from ._validation import check_points
from .cells import CELL_KINDS, ModelBundle, init_params
from .predict import fast_predict, moving_window_predict
from .signal import Dataset, Example, Sequence
from .training import TrainConfig, forward_batch, train


def _check_segments(X, d=None):
    if isinstance(X, np.ndarray) and X.ndim in (2, 3) and X.dtype != object:
        # equal-length segments: (N, m) or (N, m, d)
        X = list(X)
    if len(X) == 0:
        raise ValueError("X must contain at least one segment")
    segs = [check_points(getattr(x, "points", x), d=d, name="segment") for x in X]
    dims = {s.shape[1] for s in segs}
    if len(dims) != 1:
        raise ValueError("all segments must share one dimension")
    return segs


class RNNForecaster(RegressorMixin, BaseEstimator):
    """One-step-ahead recurrent forecaster with multi-step extrapolation.

    ``fit`` takes a list of input segments (each ``(m_i,)`` or ``(m_i, d)``)
    and the point that follows each segment.  ``forecast`` extrapolates a
    single window with either the moving-window recursion or the reduced map.
    """

    def __init__(self, cell="lstm", n_neurons=10, epochs=50, validation_fraction=0.2,
                 learning_rate=1e-3, batch_size=8, clip_norm=None, random_state=0):
        self.cell = cell
        self.n_neurons = n_neurons
        self.epochs = epochs
        self.validation_fraction = validation_fraction
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.clip_norm = clip_norm
        self.random_state = random_state

    def _config(self) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs,
            validation_fraction=self.validation_fraction,
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            clip_norm=self.clip_norm,
            seed=self.random_state,
        ).validate()

    def fit(self, X, y):
        if self.cell not in CELL_KINDS:
            raise ValueError(f"cell must be one of {CELL_KINDS}, got {self.cell!r}")
        segs = _check_segments(X)
        d = segs[0].shape[1]
        Y = np.asarray(y, dtype=np.float64).reshape(len(segs), -1)
        if Y.shape[1] != d:
            raise ValueError(f"targets have dimension {Y.shape[1]}, segments have {d}")
        data = Dataset([Example(Sequence(s), t) for s, t in zip(segs, Y)], spec=None)
        model = init_params(self.cell, self.n_neurons, d, self.random_state)
        self.model_, self.history_ = train(model, data, self._config())
        self.n_features_in_ = d
        return self

    @classmethod
    def from_model(cls, model: ModelBundle, **kwargs) -> "RNNForecaster":
        est = cls(cell=model.kind, n_neurons=model.n, **kwargs)
        est.model_ = model
        est.history_ = None
        est.n_features_in_ = model.d
        return est

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise NotFittedError(f"{type(self).__name__} is not fitted yet; call fit first")

    def predict(self, X):
        """One-step predictions, shape ``(N,)`` for d = 1 else ``(N, d)``."""
        self._check_fitted()
        segs = _check_segments(X, d=self.n_features_in_)
        out = np.empty((len(segs), self.n_features_in_))
        order = {}
        for k, s in enumerate(segs):
            order.setdefault(s.shape[0], []).append(k)
        for idx in order.values():
            _, pred, _ = forward_batch(self.model_, np.stack([segs[k] for k in idx]))
            out[idx] = pred
        return out[:, 0] if self.n_features_in_ == 1 else out

    def forecast(self, window, horizon, method="fast"):
        """Extrapolate ``horizon`` points after ``window``."""
        self._check_fitted()
        X = Sequence(check_points(getattr(window, "points", window), d=self.n_features_in_))
        if method == "fast":
            res = fast_predict(self.model_, X, horizon)
        elif method == "window":
            res = moving_window_predict(self.model_, X, horizon)
        else:
            raise ValueError("method must be 'fast' or 'window'")
        vals = res.values
        return vals[:, 0] if self.n_features_in_ == 1 else vals
