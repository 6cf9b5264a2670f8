"""Recurrent cells, the dense output head and the sequence forward pass.

Shapes follow the column-vector convention of the cell equations:
``w_in`` is ``(hidden, input_dim)`` and ``w_rec`` is ``(hidden, hidden)``.
Internally the forward pass is batched, with activations stored as
``(batch, hidden)`` rows so ``x @ w.T`` gives ``(w @ x.T).T``.
"""

from dataclasses import dataclass, field

import numpy as np

from loadcast.errors import DataError, ShapeError
from loadcast.numkit import make_rng, rng_matrix, sigmoid

GATES = ("forget", "input", "output", "candidate")
CELL_KINDS = ("rnn", "lstm")


@dataclass
class RnnParams:
    w_in: np.ndarray
    w_rec: np.ndarray

    def __post_init__(self):
        h = self.w_rec.shape[0]
        if self.w_rec.shape != (h, h) or self.w_in.shape[0] != h:
            raise ShapeError(
                f"inconsistent RNN shapes w_in={self.w_in.shape} w_rec={self.w_rec.shape}"
            )

    @property
    def hidden_size(self):
        return self.w_rec.shape[0]

    def arrays(self):
        return {"w_in": self.w_in, "w_rec": self.w_rec}


@dataclass
class LstmParams:
    w_x: dict
    w_h: dict
    b: dict

    def __post_init__(self):
        shapes = {(self.w_x[g].shape, self.w_h[g].shape, self.b[g].shape) for g in GATES}
        if len(shapes) != 1:
            raise ShapeError(f"LSTM gates have differing shapes: {sorted(shapes)}")
        (wx, wh, b), = shapes
        if wh != (wx[0], wx[0]) or b != (wx[0],):
            raise ShapeError(f"inconsistent LSTM shapes w_x={wx} w_h={wh} b={b}")

    @property
    def hidden_size(self):
        return self.w_h["forget"].shape[0]

    def arrays(self):
        out = {}
        for g in GATES:
            out[f"w_x.{g}"] = self.w_x[g]
            out[f"w_h.{g}"] = self.w_h[g]
            out[f"b.{g}"] = self.b[g]
        return out


@dataclass
class DenseParams:
    w: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        if self.b.shape != (self.w.shape[0],):
            raise ShapeError(f"dense bias {self.b.shape} does not match weights {self.w.shape}")

    def arrays(self):
        return {"w": self.w, "b": self.b}


@dataclass
class Network:
    kind: str
    cell: object
    dense: DenseParams
    input_dim: int = 1
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in CELL_KINDS:
            raise ValueError(f"unknown cell kind {self.kind!r}")
        expected = RnnParams if self.kind == "rnn" else LstmParams
        if not isinstance(self.cell, expected):
            raise ShapeError(f"{self.kind} network needs {expected.__name__}")
        if self.dense.w.shape[1] != self.hidden_size:
            raise ShapeError(
                f"dense head expects {self.dense.w.shape[1]} inputs, cell has {self.hidden_size}"
            )
        in_dim = self.cell.w_in.shape[1] if self.kind == "rnn" else self.cell.w_x["forget"].shape[1]
        if in_dim != self.input_dim:
            raise ShapeError(f"cell input width {in_dim} != input_dim {self.input_dim}")

    @property
    def hidden_size(self):
        return self.cell.hidden_size

    @property
    def horizon(self):
        return self.dense.w.shape[0]

    def param_dict(self):
        """Flat ``name -> array`` view of every learnable array (no copies)."""
        out = {f"cell.{k}": v for k, v in self.cell.arrays().items()}
        out.update({f"dense.{k}": v for k, v in self.dense.arrays().items()})
        return out

    def with_params(self, params):
        """A new network of the same architecture holding ``params``."""
        return network_from_arrays(self.kind, params, input_dim=self.input_dim, meta=dict(self.meta))


def network_from_arrays(kind, arrays, input_dim=1, meta=None):
    a = {k: np.asarray(v, dtype=np.float64) for k, v in arrays.items()}
    if kind == "rnn":
        cell = RnnParams(a["cell.w_in"], a["cell.w_rec"])
    elif kind == "lstm":
        cell = LstmParams(
            {g: a[f"cell.w_x.{g}"] for g in GATES},
            {g: a[f"cell.w_h.{g}"] for g in GATES},
            {g: a[f"cell.b.{g}"] for g in GATES},
        )
    else:
        raise ValueError(f"unknown cell kind {kind!r}")
    dense = DenseParams(a["dense.w"], a["dense.b"])
    return Network(kind, cell, dense, input_dim=input_dim, meta=meta or {})


def init_network(kind, hidden_size=100, horizon=1, input_dim=1, seed=0, scale=None):
    """Uniform init in ``[-s, s]`` with ``s = 1/sqrt(fan_in)`` unless ``scale`` is given.

    LSTM forget-gate biases start at 1.0, all other biases at 0.
    """
    rng = make_rng(seed)
    if kind == "rnn":
        cell = RnnParams(
            rng_matrix(rng, hidden_size, input_dim, scale),
            rng_matrix(rng, hidden_size, hidden_size, scale),
        )
    elif kind == "lstm":
        w_x, w_h, b = {}, {}, {}
        for g in GATES:
            w_x[g] = rng_matrix(rng, hidden_size, input_dim, scale)
            w_h[g] = rng_matrix(rng, hidden_size, hidden_size, scale)
            b[g] = np.full(hidden_size, 1.0 if g == "forget" else 0.0)
        cell = LstmParams(w_x, w_h, b)
    else:
        raise ValueError(f"unknown cell kind {kind!r}")
    dense = DenseParams(rng_matrix(rng, horizon, hidden_size, scale), np.zeros(horizon))
    meta = {
        "init": "uniform",
        "init_scale": "1/sqrt(fan_in)" if scale is None else float(scale),
        "forget_bias": 1.0 if kind == "lstm" else None,
        "seed": int(seed),
    }
    return Network(kind, cell, dense, input_dim=input_dim, meta=meta)


def _vec(v, n, name):
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (n,):
        raise ShapeError(f"{name} has shape {v.shape}, expected ({n},)")
    return v


def rnn_step(p, y_prev, x_t):
    """``y_t = tanh(W_rec y_prev + W_in x_t)``, no bias."""
    h, d = p.w_in.shape
    y_prev = _vec(y_prev, h, "y_prev")
    x_t = _vec(x_t, d, "x_t")
    return np.tanh(p.w_rec @ y_prev + p.w_in @ x_t)


def _lstm_gates(p, h_prev, x_t):
    z = {g: x_t @ p.w_x[g].T + h_prev @ p.w_h[g].T + p.b[g] for g in GATES}
    act = {g: sigmoid(z[g]) for g in ("forget", "input", "output")}
    act["candidate"] = np.tanh(z["candidate"])
    return z, act


def lstm_step(p, h_prev, c_prev, x_t, return_gates=False):
    h, d = p.w_x["forget"].shape
    h_prev = _vec(h_prev, h, "h_prev")
    c_prev = _vec(c_prev, h, "c_prev")
    x_t = _vec(x_t, d, "x_t")
    _, act = _lstm_gates(p, h_prev, x_t)
    c_t = act["forget"] * c_prev + act["input"] * act["candidate"]
    h_t = act["output"] * np.tanh(c_t)
    if return_gates:
        return h_t, c_t, act
    return h_t, c_t


def dense_forward(p, h):
    h = _vec(h, p.w.shape[1], "hidden state")
    return p.w @ h + p.b


@dataclass
class SequenceTrace:
    """Per-step cache of a batched forward pass.

    ``xs`` is ``(T, batch, input_dim)``; ``hs`` and ``cs`` are
    ``(T + 1, batch, hidden)`` with the initial state at index 0.  For LSTMs
    ``gates[g]`` holds the post-activation gate values, ``(T, batch, hidden)``.
    """

    kind: str
    xs: np.ndarray
    hs: np.ndarray
    cs: np.ndarray = None
    gates: dict = None

    def __len__(self):
        return self.xs.shape[0]

    @property
    def final_hidden(self):
        return self.hs[-1]

    @property
    def final_cell(self):
        return None if self.cs is None else self.cs[-1]


def as_batch(xs, input_dim=1):
    """Coerce inputs to ``(batch, T, input_dim)``.

    A 2-D array is read as ``(batch, T)`` when ``input_dim == 1``.
    """
    x = np.asarray(xs, dtype=np.float64)
    if x.ndim == 2 and input_dim == 1:
        x = x[:, :, None]
    if x.ndim != 3 or x.shape[2] != input_dim:
        raise ShapeError(f"cannot read inputs of shape {x.shape} with input_dim={input_dim}")
    if x.shape[1] == 0:
        raise DataError("input sequence is empty")
    return x


def run_cell(net, X, h0=None, c0=None):
    """Run the recurrent cell over a ``(batch, T, input_dim)`` array."""
    B, T, _ = X.shape
    H = net.hidden_size
    xs = np.ascontiguousarray(X.transpose(1, 0, 2))
    hs = np.empty((T + 1, B, H))
    hs[0] = 0.0 if h0 is None else h0
    if net.kind == "rnn":
        w_in_t = net.cell.w_in.T
        w_rec_t = net.cell.w_rec.T
        for t in range(T):
            hs[t + 1] = np.tanh(xs[t] @ w_in_t + hs[t] @ w_rec_t)
        return SequenceTrace("rnn", xs, hs)

    cs = np.empty((T + 1, B, H))
    cs[0] = 0.0 if c0 is None else c0
    gates = {g: np.empty((T, B, H)) for g in GATES}
    for t in range(T):
        _, act = _lstm_gates(net.cell, hs[t], xs[t])
        for g in GATES:
            gates[g][t] = act[g]
        cs[t + 1] = act["forget"] * cs[t] + act["input"] * act["candidate"]
        hs[t + 1] = act["output"] * np.tanh(cs[t + 1])
    return SequenceTrace("lstm", xs, hs, cs, gates)


def forward_batch(net, X, h0=None, c0=None):
    """Predictions ``(batch, horizon)`` and the trace for a batch of sequences."""
    X = as_batch(X, net.input_dim)
    trace = run_cell(net, X, h0, c0)
    pred = trace.final_hidden @ net.dense.w.T + net.dense.b
    return pred, trace


def forward_sequence(net, xs, h0=None, c0=None):
    """Run one sequence from a zero state (unless given) and map the final hidden state through the dense head."""
    x = np.asarray(xs, dtype=np.float64)
    if x.size == 0:
        raise DataError("input sequence is empty")
    if x.ndim == 1:
        x = x[:, None]
    pred, trace = forward_batch(net, x[None], h0, c0)
    return pred[0], trace
