"""Comparison forecasters: persistence, ARIMA-lite and feed-forward MLPs.

ARIMA-lite is an AR(p) model with an intercept, fit by least squares on a
series differenced ``d`` times.  It has no moving-average terms.  Multi-step
forecasts feed each prediction back in as a lag.
"""

from dataclasses import dataclass

import numpy as np

from loadcast.errors import DataError, NonFiniteError, ShapeError
from loadcast.numkit import make_rng, rng_matrix

MLP_DEPTHS = {"ann": 1, "dnn": 3}


def persistence_forecast(history, horizon):
    history = np.asarray(history, dtype=np.float64).ravel()
    if history.size == 0:
        raise DataError("persistence needs at least one observation")
    return np.full(int(horizon), history[-1])


@dataclass
class ArModel:
    p: int
    d: int
    coefficients: np.ndarray
    intercept: float

    def __post_init__(self):
        if self.p < 1 or self.d not in (0, 1):
            raise ValueError(f"need p >= 1 and d in {{0, 1}}, got p={self.p} d={self.d}")
        self.coefficients = np.asarray(self.coefficients, dtype=np.float64)
        if self.coefficients.shape != (self.p,) or not np.all(np.isfinite(self.coefficients)):
            raise ValueError("coefficients must be p finite values")

    def predict_next(self, lags):
        """One-step prediction from the last ``p`` values of the differenced series (oldest first)."""
        return self.intercept + float(self.coefficients @ lags[::-1])


def lag_design(z, p):
    """Design matrix ``[1, z[t-1], ..., z[t-p]]`` and response ``z[t]`` for t >= p."""
    n = z.size - p
    X = np.ones((n, p + 1))
    for j in range(1, p + 1):
        X[:, j] = z[p - j:p - j + n]
    return X, z[p:]


def fit_arima_lite(series, p=7, d=1, dedupe=False):
    """Fit ARIMA-lite to one series or a list of independent segments.

    Segments are differenced separately and their lag rows stacked, so no lag
    ever spans two segments.  With ``dedupe`` identical lag rows are counted
    once, which undoes the repetition when segments are overlapping windows.
    """
    if p < 1 or d not in (0, 1):
        raise ValueError(f"need p >= 1 and d in {{0, 1}}, got p={p} d={d}")
    segments = series if isinstance(series, (list, tuple)) else [series]
    rows, ys = [], []
    for seg in segments:
        z = np.asarray(seg, dtype=np.float64).ravel()
        if z.size <= p + d + 1:
            continue
        if d:
            z = np.diff(z, n=d)
        X, y = lag_design(z, p)
        rows.append(X)
        ys.append(y)
    if not rows:
        raise DataError(f"series too short for AR({p}) with d={d}: need more than {p + d + 1} values")
    X, y = np.vstack(rows), np.concatenate(ys)
    if dedupe:
        A = np.unique(np.hstack([X, y[:, None]]), axis=0)
        X, y = A[:, :-1], A[:, -1]
    if X.shape[0] < X.shape[1] or np.linalg.matrix_rank(X) < X.shape[1]:
        # a rank-deficient design usually means a (near) constant series; p=1 keeps the intercept identifiable
        if p > 1:
            raise DataError(f"singular design matrix for AR({p}); try a smaller p")
        return _fit_degenerate(X, y, d)
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    return ArModel(p, d, beta[1:], float(beta[0]))


def _fit_degenerate(X, y, d):
    # constant lag column: the level alone explains the data
    tol = 1e-9 * max(1.0, float(np.max(np.abs(X[:, 1]))))
    if np.ptp(X[:, 1]) <= tol:
        return ArModel(1, d, np.zeros(1), float(np.mean(y)))
    raise DataError("singular design matrix for AR(1); series has too little variation")


def forecast_arima_lite(model, history, horizon):
    history = np.asarray(history, dtype=np.float64).ravel()
    if history.size < model.p + model.d:
        raise DataError(f"need at least {model.p + model.d} history values, got {history.size}")
    z = np.diff(history, n=model.d) if model.d else history.copy()
    lags = list(z[-model.p:])
    out = np.empty(int(horizon))
    level = history[-1]
    for h in range(int(horizon)):
        step = model.predict_next(np.asarray(lags[-model.p:]))
        lags.append(step)
        if model.d:
            level = level + step
            out[h] = level
        else:
            out[h] = step
    if not np.all(np.isfinite(out)):
        raise NonFiniteError("ARIMA-lite forecast diverged")
    return out


def init_mlp(kind, input_len, horizon, width=64, seed=0):
    if kind not in MLP_DEPTHS:
        raise ValueError(f"unknown MLP kind {kind!r}; expected 'ann' or 'dnn'")
    if input_len < 1 or horizon < 1:
        raise ShapeError("input_len and horizon must be >= 1")
    return init_mlp_layers([input_len] + [width] * MLP_DEPTHS[kind] + [horizon], seed)


def init_mlp_layers(sizes, seed=0):
    rng = make_rng(seed)
    params = {}
    for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        params[f"w{i}"] = rng_matrix(rng, fan_out, fan_in)
        params[f"b{i}"] = np.zeros(fan_out)
    return params


def _n_layers(params):
    return len(params) // 2


def mlp_forward(params, X, return_cache=False):
    """tanh hidden layers, linear output.  ``X`` is ``(batch, input_len)``."""
    a = np.asarray(X, dtype=np.float64)
    if a.ndim == 1:
        a = a[None, :]
    L = _n_layers(params)
    if a.shape[1] != params["w0"].shape[1]:
        raise ShapeError(f"MLP expects {params['w0'].shape[1]} inputs, got {a.shape[1]}")
    acts = [a]
    for i in range(L):
        z = a @ params[f"w{i}"].T + params[f"b{i}"]
        a = z if i == L - 1 else np.tanh(z)
        acts.append(a)
    return (a, acts) if return_cache else a


def mlp_gradients(params, X, Y):
    """Mean MSE over the batch and its gradient by reverse accumulation."""
    out, acts = mlp_forward(params, X, return_cache=True)
    Y = np.asarray(Y, dtype=np.float64).reshape(out.shape)
    diff = out - Y
    loss = float(np.mean(diff**2))
    if not np.isfinite(loss):
        raise NonFiniteError("loss is not finite")
    delta = 2.0 * diff / diff.size
    grads = {}
    for i in range(_n_layers(params) - 1, -1, -1):
        grads[f"w{i}"] = delta.T @ acts[i]
        grads[f"b{i}"] = delta.sum(axis=0)
        if i:
            delta = (delta @ params[f"w{i}"]) * (1.0 - acts[i] ** 2)
    return loss, grads


def make_mlp_baseline(kind, input_len, horizon, rng=None, **kwargs):
    """An unfitted ANN (one hidden layer) or DNN (three) forecaster."""
    from loadcast.estimators import MLPForecaster

    if kind not in MLP_DEPTHS:
        raise ValueError(f"unknown MLP kind {kind!r}; expected 'ann' or 'dnn'")
    if input_len < 1 or horizon < 1:
        raise ShapeError("input_len and horizon must be >= 1")
    seed = int(rng.integers(2**63)) if rng is not None else 0
    return MLPForecaster(kind=kind, input_len=input_len, horizon=horizon, random_state=seed, **kwargs)
