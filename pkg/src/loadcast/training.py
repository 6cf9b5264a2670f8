"""Loss, backpropagation through time, Adam and the mini-batch training loop."""

import csv
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from loadcast.errors import NonFiniteError, ShapeError, TrainingDivergedError
from loadcast.numkit import make_rng
from loadcast.seqmodels import GATES, as_batch, forward_batch

logger = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    epochs: int = 300
    batch_size: int = 20
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    grad_clip: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.learning_rate >= 0:
            raise ValueError(f"learning_rate must be non-negative, got {self.learning_rate}")
        if self.grad_clip is not None and self.grad_clip <= 0:
            raise ValueError("grad_clip must be positive or None")

    def to_dict(self):
        return asdict(self)


def mse_loss(pred, target):
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeError(f"prediction shape {pred.shape} != target shape {target.shape}")
    return float(np.mean((pred - target) ** 2))


def _as_targets(Y, batch, horizon):
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim == 1:
        Y = Y.reshape(batch, -1)
    if Y.shape != (batch, horizon):
        raise ShapeError(f"targets have shape {Y.shape}, expected ({batch}, {horizon})")
    return Y


def bptt_gradients(net, X, Y):
    """Mean batch MSE and its exact gradient for every parameter of ``net``.

    Returns ``(loss, grads)`` where ``grads`` is keyed like ``net.param_dict()``.
    """
    X = as_batch(X, net.input_dim)
    if X.shape[0] == 0:
        raise ShapeError("empty batch")
    pred, tr = forward_batch(net, X)
    Y = _as_targets(Y, X.shape[0], net.horizon)
    diff = pred - Y
    loss = float(np.mean(diff**2))
    if not np.isfinite(loss):
        raise NonFiniteError("loss is not finite")
    dpred = 2.0 * diff / diff.size

    grads = {
        "dense.w": dpred.T @ tr.final_hidden,
        "dense.b": dpred.sum(axis=0),
    }
    dh = dpred @ net.dense.w
    T = len(tr)

    if net.kind == "rnn":
        w_rec = net.cell.w_rec
        g_in = np.zeros_like(net.cell.w_in)
        g_rec = np.zeros_like(w_rec)
        for t in range(T - 1, -1, -1):
            y = tr.hs[t + 1]
            da = dh * (1.0 - y * y)
            g_in += da.T @ tr.xs[t]
            g_rec += da.T @ tr.hs[t]
            dh = da @ w_rec
        grads["cell.w_in"] = g_in
        grads["cell.w_rec"] = g_rec
        return loss, grads

    p = net.cell
    gw_x = {g: np.zeros_like(p.w_x[g]) for g in GATES}
    gw_h = {g: np.zeros_like(p.w_h[g]) for g in GATES}
    gb = {g: np.zeros_like(p.b[g]) for g in GATES}
    dc = np.zeros_like(dh)
    for t in range(T - 1, -1, -1):
        f, i, o, cand = (tr.gates[g][t] for g in GATES)
        c_prev, h_prev = tr.cs[t], tr.hs[t]
        tc = np.tanh(tr.cs[t + 1])
        dc = dc + dh * o * (1.0 - tc * tc)
        dz = {
            "forget": dc * c_prev * f * (1.0 - f),
            "input": dc * cand * i * (1.0 - i),
            "output": dh * tc * o * (1.0 - o),
            "candidate": dc * i * (1.0 - cand * cand),
        }
        dh = np.zeros_like(dh)
        for g in GATES:
            gw_x[g] += dz[g].T @ tr.xs[t]
            gw_h[g] += dz[g].T @ h_prev
            gb[g] += dz[g].sum(axis=0)
            dh += dz[g] @ p.w_h[g]
        dc = dc * f
    for g in GATES:
        grads[f"cell.w_x.{g}"] = gw_x[g]
        grads[f"cell.w_h.{g}"] = gw_h[g]
        grads[f"cell.b.{g}"] = gb[g]
    return loss, grads


def global_norm(grads):
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


def clip_by_global_norm(grads, max_norm):
    """Rescale ``grads`` so their joint L2 norm is at most ``max_norm``."""
    norm = global_norm(grads)
    if max_norm is None or norm <= max_norm:
        return grads, norm
    factor = max_norm / norm
    return {k: g * factor for k, g in grads.items()}, norm


@dataclass
class AdamState:
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    @classmethod
    def zeros_like(cls, params):
        return cls(
            0,
            {k: np.zeros_like(p) for k, p in params.items()},
            {k: np.zeros_like(p) for k, p in params.items()},
        )


def adam_step(params, grads, state, cfg):
    """One bias-corrected Adam update; returns new ``(params, state)``.

    Gradients are clipped by global norm first when ``cfg.grad_clip`` is set.
    """
    if set(grads) != set(params):
        raise ShapeError(f"gradient keys {sorted(grads)} do not match parameters")
    for k, g in grads.items():
        if g.shape != params[k].shape:
            raise ShapeError(f"gradient {k} has shape {g.shape}, parameter {params[k].shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"gradient {k} contains NaN or Inf")
    if not state.m:
        state = AdamState.zeros_like(params)
    grads, _ = clip_by_global_norm(grads, cfg.grad_clip)

    t = state.t + 1
    bc1 = 1.0 - cfg.beta1**t
    bc2 = 1.0 - cfg.beta2**t
    new_params, m, v = {}, {}, {}
    for k, p in params.items():
        g = grads[k]
        m[k] = cfg.beta1 * state.m[k] + (1.0 - cfg.beta1) * g
        v[k] = cfg.beta2 * state.v[k] + (1.0 - cfg.beta2) * (g * g)
        step = cfg.learning_rate * (m[k] / bc1) / (np.sqrt(v[k] / bc2) + cfg.eps)
        new_params[k] = p - step
    return new_params, AdamState(t, m, v)


@dataclass
class LossHistory:
    losses: list = field(default_factory=list)

    def __len__(self):
        return len(self.losses)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "mean_loss"])
            for i, loss in enumerate(self.losses, start=1):
                w.writerow([i, repr(float(loss))])


def fit_params(params, loss_and_grads, X, Y, cfg):
    """Generic seeded mini-batch Adam loop.

    ``loss_and_grads(params, Xb, Yb)`` must return ``(mean_loss, grads)``.
    Windows are reshuffled every epoch; the last partial batch is kept.
    """
    n = len(X)
    if n == 0:
        raise ShapeError("no training samples")
    if len(Y) != n:
        raise ShapeError(f"{n} inputs but {len(Y)} targets")
    rng = make_rng(cfg.seed)
    state = AdamState.zeros_like(params)
    history = LossHistory()
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            try:
                loss, grads = loss_and_grads(params, X[idx], Y[idx])
            except NonFiniteError as exc:
                raise TrainingDivergedError(epoch) from exc
            if not np.isfinite(loss):
                raise TrainingDivergedError(epoch)
            total += loss * len(idx)
            try:
                params, state = adam_step(params, grads, state, cfg)
            except NonFiniteError as exc:
                raise TrainingDivergedError(epoch, "non-finite gradient") from exc
        mean = total / n
        history.losses.append(mean)
        logger.debug("epoch %d loss %.6g", epoch, mean)
    return params, history


def train(net, X, Y=None, cfg=None):
    """Train a recurrent network on windows ``X`` (batch, T) -> ``Y`` (batch, horizon).

    ``X`` may also be a WindowSet, in which case ``Y`` is ignored.
    Returns a new trained network and its LossHistory; ``net`` is not modified.
    """
    cfg = cfg or TrainConfig()
    if hasattr(X, "inputs"):
        X, Y = X.inputs, X.targets
    X = as_batch(X, net.input_dim)
    Y = _as_targets(Y, X.shape[0], net.horizon)

    def loss_and_grads(params, Xb, Yb):
        return bptt_gradients(net.with_params(params), Xb, Yb)

    params = {k: v.copy() for k, v in net.param_dict().items()}
    params, history = fit_params(params, loss_and_grads, X, Y, cfg)
    trained = net.with_params(params)
    trained.meta.update({"train_config": cfg.to_dict(), "loss": "mse", "optimizer": "adam"})
    return trained, history
