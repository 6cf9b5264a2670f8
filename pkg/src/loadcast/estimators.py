"""scikit-learn compatible forecasters.

Every forecaster maps a 2-D array of input windows ``X`` (n_samples,
input_len) to a 2-D array of forecasts (n_samples, horizon).  ``fit`` takes the
matching target windows ``y``.  Hyper-parameters live in ``__init__`` so
``get_params``/``set_params``/``clone`` work unchanged.
"""

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from loadcast.baselines import (
    MLP_DEPTHS,
    fit_arima_lite,
    forecast_arima_lite,
    init_mlp,
    mlp_forward,
    mlp_gradients,
    persistence_forecast,
)
from loadcast.errors import ShapeError
from loadcast.seqmodels import forward_batch, init_network
from loadcast.training import TrainConfig, fit_params, train


def _check_windows(X, y):
    X, y = check_X_y(X, y, multi_output=True, y_numeric=True, dtype=np.float64)
    y_1d = y.ndim == 1
    return X, (y[:, None] if y_1d else y), y_1d


def _finish(pred, y_1d):
    return pred.ravel() if y_1d else pred


def _as_sequences(X):
    if isinstance(X, np.ndarray) and X.ndim == 2:
        return list(X)
    if isinstance(X, np.ndarray) and X.ndim == 1:
        return [X]
    return [np.asarray(x, dtype=np.float64).ravel() for x in X]


class _TrainedForecaster(RegressorMixin, BaseEstimator):
    def _train_config(self):
        return TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            grad_clip=self.grad_clip,
            seed=self.random_state,
        )


class RecurrentForecaster(_TrainedForecaster):
    """One recurrent layer (``cell='rnn'`` or ``'lstm'``) plus a linear dense head."""

    def __init__(self, cell="lstm", hidden_size=100, epochs=300, batch_size=20,
                 learning_rate=0.001, grad_clip=1.0, random_state=0):
        self.cell = cell
        self.hidden_size = hidden_size
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.grad_clip = grad_clip
        self.random_state = random_state

    def fit(self, X, y):
        X, y, self._y_1d = _check_windows(X, y)
        net = init_network(self.cell, self.hidden_size, y.shape[1], seed=self.random_state)
        self.network_, self.loss_history_ = train(net, X, y, self._train_config())
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "network_")
        X = check_array(X, dtype=np.float64)
        pred, _ = forward_batch(self.network_, X)
        return _finish(pred, self._y_1d)


class MLPForecaster(_TrainedForecaster):
    """Feed-forward baseline: ``kind='ann'`` has one tanh hidden layer, ``'dnn'`` three."""

    def __init__(self, kind="ann", width=64, epochs=300, batch_size=20, learning_rate=0.001,
                 grad_clip=1.0, random_state=0, input_len=None, horizon=None):
        self.kind = kind
        self.width = width
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.grad_clip = grad_clip
        self.random_state = random_state
        self.input_len = input_len
        self.horizon = horizon

    def fit(self, X, y):
        if self.kind not in MLP_DEPTHS:
            raise ValueError(f"unknown MLP kind {self.kind!r}")
        X, y, self._y_1d = _check_windows(X, y)
        for name, want, got in (("input_len", self.input_len, X.shape[1]),
                                ("horizon", self.horizon, y.shape[1])):
            if want is not None and want != got:
                raise ShapeError(f"{name}={want} but data has {got}")
        params = init_mlp(self.kind, X.shape[1], y.shape[1], self.width, self.random_state)
        self.params_, self.loss_history_ = fit_params(params, mlp_gradients, X, y, self._train_config())
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "params_")
        X = check_array(X, dtype=np.float64)
        return _finish(mlp_forward(self.params_, X), self._y_1d)


class ArimaLiteForecaster(RegressorMixin, BaseEstimator):
    """Least-squares AR(p) on a ``d``-times differenced series with recursive multi-step forecasts.

    ``fit(X)`` accepts one or more series (rows or a ragged list).  With
    ``y``, each row of ``X`` is joined with its target window and overlapping
    windows are de-duplicated before the fit.  ``predict`` treats each row as
    the full history preceding the forecast origin.
    """

    requires_history = True

    def __init__(self, p=7, d=1, horizon=None):
        self.p = p
        self.d = d
        self.horizon = horizon

    def fit(self, X, y=None):
        segments = _as_sequences(X)
        if y is not None:
            y = np.asarray(y, dtype=np.float64)
            y2 = y[:, None] if y.ndim == 1 else y
            segments = [np.concatenate([s, t]) for s, t in zip(segments, y2)]
            self.horizon_ = y2.shape[1]
        else:
            self.horizon_ = self.horizon or 1
        self.model_ = fit_arima_lite(segments, self.p, self.d, dedupe=y is not None)
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        return np.vstack([forecast_arima_lite(self.model_, h, self.horizon_) for h in _as_sequences(X)])


class PersistenceForecaster(RegressorMixin, BaseEstimator):
    """Repeats the last observed value over the horizon."""

    def __init__(self, horizon=None):
        self.horizon = horizon

    def fit(self, X, y=None):
        if y is not None:
            y = np.asarray(y)
            self.horizon_ = 1 if y.ndim == 1 else y.shape[1]
        else:
            self.horizon_ = self.horizon or 1
        return self

    def predict(self, X):
        check_is_fitted(self, "horizon_")
        return np.vstack([persistence_forecast(h, self.horizon_) for h in _as_sequences(X)])
