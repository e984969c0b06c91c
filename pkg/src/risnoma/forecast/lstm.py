"""Single-layer LSTM with a dense read-out, trained full-batch by BPTT."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..neural import GradientTape, sgd_step, sigmoid

# gate blocks along the 4U axis
I, F, O, G = 0, 1, 2, 3


@dataclass
class LstmCell:
    Wx: np.ndarray   # (H, 4U)
    Wh: np.ndarray   # (U, 4U)
    b: np.ndarray    # (4U,)
    V: np.ndarray    # (U, out) read-out
    c: np.ndarray    # (out,)

    @classmethod
    def init(cls, input_dim: int, hidden: int, output_dim: int, rng: np.random.Generator) -> "LstmCell":
        bx = 1.0 / math.sqrt(hidden)
        return cls(rng.uniform(-bx, bx, (input_dim, 4 * hidden)),
                   rng.uniform(-bx, bx, (hidden, 4 * hidden)),
                   rng.uniform(-bx, bx, 4 * hidden),
                   rng.uniform(-bx, bx, (hidden, output_dim)),
                   np.zeros(output_dim))

    @classmethod
    def zeros(cls, input_dim: int, hidden: int, output_dim: int) -> "LstmCell":
        return cls(np.zeros((input_dim, 4 * hidden)), np.zeros((hidden, 4 * hidden)),
                   np.zeros(4 * hidden), np.zeros((hidden, output_dim)), np.zeros(output_dim))

    @property
    def hidden(self) -> int:
        return self.Wh.shape[0]

    def params(self) -> dict[str, np.ndarray]:
        return {"Wx": self.Wx, "Wh": self.Wh, "b": self.b, "V": self.V, "c": self.c}

    def copy(self) -> "LstmCell":
        return LstmCell(*(p.copy() for p in self.params().values()))


def lstm_step(cell: LstmCell, x, h_prev, c_prev):
    """One time step. Returns ``(h, c, gates)`` with gates stacked as [i, f, o, g]."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[1] != cell.Wx.shape[0]:
        raise ValueError(f"input dim {x.shape[1]} != {cell.Wx.shape[0]}")
    u = cell.hidden
    z = x @ cell.Wx + np.atleast_2d(h_prev) @ cell.Wh + cell.b
    i = sigmoid(z[:, :u])
    f = sigmoid(z[:, u:2 * u])
    o = sigmoid(z[:, 2 * u:3 * u])
    g = np.tanh(z[:, 3 * u:])
    c = f * np.atleast_2d(c_prev) + i * g
    h = o * np.tanh(c)
    return h, c, (i, f, o, g)


def run_sequences(cell: LstmCell, xs: np.ndarray):
    """Forward a batch ``xs`` of shape (B, T, H); returns outputs (B, out) and a cache."""
    b, t, _ = xs.shape
    u = cell.hidden
    h = np.zeros((b, u))
    c = np.zeros((b, u))
    cache = []
    for k in range(t):
        h_prev, c_prev = h, c
        h, c, gates = lstm_step(cell, xs[:, k, :], h_prev, c_prev)
        cache.append((xs[:, k, :], h_prev, c_prev, gates, c))
    return h @ cell.V + cell.c, (cache, h)


def loss_and_grads(cell: LstmCell, xs: np.ndarray, ys: np.ndarray) -> tuple[float, dict[str, np.ndarray]]:
    """Mean squared error over every output coordinate and its gradient."""
    out, (cache, h_last) = run_sequences(cell, xs)
    err = out - ys
    loss = float(np.mean(err ** 2))
    dout = 2.0 * err / err.size
    grads = {k: np.zeros_like(v) for k, v in cell.params().items()}
    grads["V"] = h_last.T @ dout
    grads["c"] = dout.sum(axis=0)
    dh = dout @ cell.V.T
    dc = np.zeros_like(dh)
    for x, h_prev, c_prev, (i, f, o, g), c in reversed(cache):
        tc = np.tanh(c)
        do = dh * tc
        dc = dc + dh * o * (1.0 - tc * tc)
        di = dc * g
        df = dc * c_prev
        dg = dc * i
        dz = np.concatenate([di * i * (1 - i), df * f * (1 - f), do * o * (1 - o), dg * (1 - g * g)], axis=1)
        grads["Wx"] += x.T @ dz
        grads["Wh"] += h_prev.T @ dz
        grads["b"] += dz.sum(axis=0)
        dh = dz @ cell.Wh.T
        dc = dc * f
    return loss, grads


def make_windows(series: np.ndarray, window: int, targets_from: int = 0):
    """Inputs ``series[n-window+1 .. n]`` paired with target ``series[n+1]``.

    Only targets at index ``>= targets_from`` are emitted.
    """
    xs, ys = [], []
    for n in range(max(window - 1, targets_from - 1), len(series) - 1):
        xs.append(series[n - window + 1:n + 1])
        ys.append(series[n + 1])
    if not xs:
        raise ValueError(f"series of length {len(series)} too short for window {window}")
    return np.asarray(xs), np.asarray(ys)


def lstm_train(train: np.ndarray, hidden: int, epochs: int, lr: float, l2: float,
               window: int, seed: int) -> tuple[LstmCell, list[float]]:
    """Full-batch gradient descent on next-sample prediction; L2 applies to the read-out."""
    if len(train) < 2:
        raise ValueError("training set needs at least two samples")
    xs, ys = make_windows(np.asarray(train, dtype=float), min(window, len(train) - 1))
    cell = LstmCell.init(xs.shape[2], hidden, ys.shape[1], np.random.default_rng(seed))
    history = []
    for epoch in range(epochs):
        loss, grads = loss_and_grads(cell, xs, ys)
        if not math.isfinite(loss):
            raise FloatingPointError(f"LSTM loss diverged at epoch {epoch} (lr={lr})")
        history.append(loss)
        tape = GradientTape({k: -g for k, g in grads.items()})
        sgd_step(cell, tape, lr, l2, l2_keys=lambda name: name == "V")
    return cell, history


def lstm_predict(cell: LstmCell, context: np.ndarray, window: int, start: int, stop: int) -> np.ndarray:
    """Predict ``context[k]`` for ``start <= k < stop`` from the preceding ``window`` rows.

    ``stop`` may equal ``len(context)`` + N to forecast past the end; each
    prediction only reads true rows, never earlier predictions.
    """
    preds = []
    for k in range(start, stop):
        lo = max(0, k - window)
        seq = context[lo:k][None, :, :]
        out, _ = run_sequences(cell, seq)
        preds.append(out[0])
    return np.asarray(preds)
