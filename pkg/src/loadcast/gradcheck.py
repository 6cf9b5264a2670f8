"""Randomised analytic-vs-finite-difference gradient checks."""

from dataclasses import dataclass

import numpy as np

from loadcast.baselines import init_mlp_layers, mlp_gradients
from loadcast.numkit import finite_diff_grad, make_rng, relative_error
from loadcast.seqmodels import init_network
from loadcast.training import bptt_gradients

KINDS = ("rnn", "lstm", "ann", "dnn")


def flatten(params):
    keys = list(params)
    return keys, np.concatenate([params[k].ravel() for k in keys])


def unflatten(keys, template, flat):
    out, i = {}, 0
    for k in keys:
        n = template[k].size
        out[k] = flat[i:i + n].reshape(template[k].shape)
        i += n
    return out


def compare(loss_and_grads, params, X, Y, eps=1e-3, order=4):
    """Max per-coordinate relative error between analytic and central-difference gradients."""
    _, grads = loss_and_grads(params, X, Y)
    keys, flat = flatten(params)
    numeric = finite_diff_grad(lambda v: loss_and_grads(unflatten(keys, params, v), X, Y)[0], flat, eps, order)
    analytic = np.concatenate([grads[k].ravel() for k in keys])
    return float(relative_error(analytic, numeric).max())


@dataclass
class Trial:
    kind: str
    hidden: int
    seq_len: int
    horizon: int
    batch: int
    max_rel_error: float


def random_trial(kind, rng, max_hidden=8, max_seq=12, max_horizon=4, eps=1e-3, order=4):
    hidden = int(rng.integers(1, max_hidden + 1))
    seq = int(rng.integers(1, max_seq + 1))
    horizon = int(rng.integers(1, max_horizon + 1))
    batch = int(rng.integers(1, 4))
    seed = int(rng.integers(2**32))
    X = rng.normal(size=(batch, seq))
    Y = rng.normal(size=(batch, horizon))
    if kind in ("rnn", "lstm"):
        net = init_network(kind, hidden, horizon, seed=seed, scale=float(rng.uniform(0.3, 1.0)))
        # perturb biases away from their init values so every term is exercised
        params = {k: v + (rng.normal(scale=0.3, size=v.shape) if ".b." in k else 0.0)
                  for k, v in net.param_dict().items()}
        err = compare(lambda p, x, y: bptt_gradients(net.with_params(p), x, y), params, X, Y, eps, order)
    else:
        depth = 1 if kind == "ann" else 3
        params = init_mlp_layers([seq] + [hidden] * depth + [horizon], seed)
        params = {k: v + rng.normal(scale=0.3, size=v.shape) for k, v in params.items()}
        err = compare(mlp_gradients, params, X, Y, eps, order)
    return Trial(kind, hidden, seq, horizon, batch, err)


def run_gradcheck(kind, trials=20, seed=0, eps=1e-3, order=4):
    if kind not in KINDS:
        raise ValueError(f"unknown model kind {kind!r}; expected one of {KINDS}")
    rng = make_rng(seed)
    return [random_trial(kind, rng, eps=eps, order=order) for _ in range(trials)]
