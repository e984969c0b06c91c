"""Small dense-network core with explicit reverse-mode gradients.

Anything exposing ``params() -> dict[str, ndarray]`` (in a fixed order) can be
updated with :func:`sgd_step`, checkpointed with :func:`save_checkpoint` and
verified with :func:`gradient_check`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping

import numpy as np

ACTIVATIONS = ("identity", "relu", "tanh", "sigmoid")
CHECKPOINT_MAGIC = "risnoma-checkpoint"
CHECKPOINT_VERSION = 1


def sigmoid(z):
    # split by sign to avoid overflow in exp
    out = np.empty_like(z, dtype=float)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _act(name: str, z):
    if name == "identity":
        return z
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "tanh":
        return np.tanh(z)
    if name == "sigmoid":
        return sigmoid(np.asarray(z, dtype=float))
    raise ValueError(f"unknown activation {name!r}")


def _act_grad(name: str, z, a):
    if name == "identity":
        return np.ones_like(z)
    if name == "relu":
        return (z > 0).astype(float)
    if name == "tanh":
        return 1.0 - a * a
    if name == "sigmoid":
        return a * (1.0 - a)
    raise ValueError(f"unknown activation {name!r}")


@dataclass
class Dense:
    W: np.ndarray           # (in, out)
    b: np.ndarray           # (out,)
    activation: str = "identity"

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        if self.W.ndim != 2 or self.b.shape != (self.W.shape[1],):
            raise ValueError(f"bad layer shapes W{self.W.shape} b{self.b.shape}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


class DenseNet:
    def __init__(self, layers: list[Dense]):
        if not layers:
            raise ValueError("DenseNet needs at least one layer")
        for k in range(1, len(layers)):
            if layers[k - 1].W.shape[1] != layers[k].W.shape[0]:
                raise ValueError(f"layer {k} input {layers[k].W.shape[0]} != previous output "
                                 f"{layers[k - 1].W.shape[1]}")
        self.layers = layers

    @classmethod
    def build(cls, sizes: list[int], activations: list[str] | str, rng: np.random.Generator) -> "DenseNet":
        """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialisation."""
        n = len(sizes) - 1
        acts = [activations] * n if isinstance(activations, str) else list(activations)
        if len(acts) != n:
            raise ValueError("one activation per layer required")
        layers = []
        for fan_in, fan_out, act in zip(sizes[:-1], sizes[1:], acts):
            bound = 1.0 / math.sqrt(fan_in)
            layers.append(Dense(rng.uniform(-bound, bound, (fan_in, fan_out)),
                                rng.uniform(-bound, bound, fan_out), act))
        return cls(layers)

    @property
    def input_dim(self) -> int:
        return self.layers[0].W.shape[0]

    @property
    def output_dim(self) -> int:
        return self.layers[-1].W.shape[1]

    def params(self) -> dict[str, np.ndarray]:
        out = {}
        for k, layer in enumerate(self.layers):
            out[f"layers.{k}.W"] = layer.W
            out[f"layers.{k}.b"] = layer.b
        return out

    def copy(self) -> "DenseNet":
        return DenseNet([Dense(l.W.copy(), l.b.copy(), l.activation) for l in self.layers])

    def load_from(self, other: "DenseNet") -> None:
        copy_params(self, other)

    def n_params(self) -> int:
        return sum(v.size for v in self.params().values())


@dataclass
class ForwardCache:
    x: np.ndarray
    zs: list = field(default_factory=list)
    acts: list = field(default_factory=list)
    squeeze: bool = False

    @property
    def output(self) -> np.ndarray:
        out = self.acts[-1]
        return out[0] if self.squeeze else out


@dataclass
class GradientTape:
    grads: dict[str, np.ndarray]
    dx: np.ndarray | None = None

    def norm(self) -> float:
        return math.sqrt(sum(float(np.sum(g * g)) for g in self.grads.values()))

    def scaled(self, factor: float) -> "GradientTape":
        return GradientTape({k: g * factor for k, g in self.grads.items()},
                            None if self.dx is None else self.dx * factor)

    def add(self, other: "GradientTape", prefix: str = "") -> None:
        for k, g in other.grads.items():
            key = prefix + k
            self.grads[key] = self.grads[key] + g if key in self.grads else g


def _as_batch(net: DenseNet, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != net.input_dim:
        raise ValueError(f"input has shape {x.shape}, network expects (*, {net.input_dim})")
    return x, squeeze


def forward_cached(net: DenseNet, x) -> ForwardCache:
    xb, squeeze = _as_batch(net, x)
    cache = ForwardCache(xb, squeeze=squeeze)
    a = xb
    for layer in net.layers:
        z = a @ layer.W + layer.b
        a = _act(layer.activation, z)
        cache.zs.append(z)
        cache.acts.append(a)
    return cache


def forward(net: DenseNet, x) -> np.ndarray:
    """Evaluate the network on one vector or a (batch, input_dim) array."""
    a, squeeze = _as_batch(net, x)
    for layer in net.layers:
        a = _act(layer.activation, a @ layer.W + layer.b)
    return a[0] if squeeze else a


def backward(net: DenseNet, x_or_cache, upstream) -> GradientTape:
    """Gradients of ``sum(output * upstream)`` w.r.t. every parameter and the input."""
    cache = x_or_cache if isinstance(x_or_cache, ForwardCache) else forward_cached(net, x_or_cache)
    up = np.asarray(upstream, dtype=float)
    if cache.squeeze and up.ndim == 1:
        up = up[None, :]
    if up.shape != cache.acts[-1].shape:
        raise ValueError(f"upstream shape {up.shape} != output shape {cache.acts[-1].shape}")
    grads: dict[str, np.ndarray] = {}
    delta = up
    for k in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[k]
        delta = delta * _act_grad(layer.activation, cache.zs[k], cache.acts[k])
        a_prev = cache.x if k == 0 else cache.acts[k - 1]
        grads[f"layers.{k}.W"] = a_prev.T @ delta
        grads[f"layers.{k}.b"] = delta.sum(axis=0)
        delta = delta @ layer.W.T
    ordered = {name: grads[name] for name in net.params()}
    return GradientTape(ordered, delta[0] if cache.squeeze else delta)


def sgd_step(model, tape: GradientTape, lr: float, l2: float = 0.0, l2_keys: Callable[[str], bool] | None = None):
    """In-place ``theta += lr*tape - lr*l2*theta``; the caller picks the sign of ``tape``.

    ``l2_keys`` optionally restricts weight decay to matching parameter names.
    """
    if lr < 0 or l2 < 0:
        raise ValueError("lr and l2 must be >= 0")
    params = model.params()
    for name, theta in params.items():
        g = tape.grads.get(name)
        if g is None:
            continue
        if g.shape != theta.shape:
            raise ValueError(f"gradient for {name} has shape {g.shape}, parameter {theta.shape}")
        decay = l2 if (l2_keys is None or l2_keys(name)) else 0.0
        new = theta + lr * g - lr * decay * theta
        if not np.all(np.isfinite(new)):
            raise FloatingPointError(f"non-finite update in parameter {name}")
        theta[...] = new
    return model


def copy_params(dst, src) -> None:
    dp, sp = dst.params(), src.params()
    if list(dp) != list(sp):
        raise ValueError("parameter sets differ")
    for k in dp:
        if dp[k].shape != sp[k].shape:
            raise ValueError(f"shape mismatch for {k}: {dp[k].shape} vs {sp[k].shape}")
        dp[k][...] = sp[k]


def max_param_diff(a, b) -> float:
    pa, pb = a.params(), b.params()
    return max(float(np.max(np.abs(pa[k] - pb[k]))) if pa[k].size else 0.0 for k in pa)


def gradient_check(loss_fn: Callable[[], float], params: Mapping[str, np.ndarray],
                   analytic: Mapping[str, np.ndarray], step: float = 1e-5,
                   max_entries: int | None = None, rng: np.random.Generator | None = None) -> float:
    """Largest relative error between ``analytic`` and central differences of ``loss_fn``.

    ``loss_fn`` must read the arrays in ``params`` (perturbed in place). The
    relative error per entry is ``|a - n| / max(|a|, |n|, 1e-8)`` once the
    absolute difference exceeds 1e-9, which keeps entries with vanishing
    gradients from dominating through round-off.
    """
    worst = 0.0
    for name, theta in params.items():
        flat = theta.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = (rng or np.random.default_rng(0)).choice(flat.size, max_entries, replace=False)
        ga = np.asarray(analytic[name]).reshape(-1)
        for i in idx:
            old = flat[i]
            flat[i] = old + step
            fp = loss_fn()
            flat[i] = old - step
            fm = loss_fn()
            flat[i] = old
            num = (fp - fm) / (2 * step)
            diff = abs(ga[i] - num)
            if diff > 1e-9:
                worst = max(worst, diff / max(abs(ga[i]), abs(num), 1e-8))
    return worst


# -- checkpoints --------------------------------------------------------------------------

def save_checkpoint(path: str | Path, model, meta: Mapping[str, str] | None = None) -> None:
    """Versioned text checkpoint: header, shape manifest, then one value per line."""
    params = model.params()
    lines = [f"{CHECKPOINT_MAGIC} v{CHECKPOINT_VERSION}"]
    for k, v in sorted((meta or {}).items()):
        if "\n" in str(v) or " " in str(k):
            raise ValueError("metadata keys must not contain spaces and values no newlines")
        lines.append(f"meta {k} {v}")
    for name, arr in params.items():
        lines.append(f"param {name} {','.join(str(d) for d in arr.shape) or '-'}")
    lines.append("values")
    for arr in params.values():
        lines.extend(repr(float(v)) for v in arr.reshape(-1))
    Path(path).write_text("\n".join(lines) + "\n")


def read_checkpoint(path: str | Path) -> tuple[dict[str, str], dict[str, np.ndarray]]:
    text = Path(path).read_text().splitlines()
    if not text or text[0] != f"{CHECKPOINT_MAGIC} v{CHECKPOINT_VERSION}":
        raise ValueError(f"{path}: unsupported checkpoint header {text[0] if text else ''!r}")
    meta: dict[str, str] = {}
    manifest: list[tuple[str, tuple[int, ...]]] = []
    i = 1
    while i < len(text) and text[i] != "values":
        kind, rest = text[i].split(" ", 1)
        if kind == "meta":
            k, _, v = rest.partition(" ")
            meta[k] = v
        elif kind == "param":
            name, shape = rest.rsplit(" ", 1)
            manifest.append((name, () if shape == "-" else tuple(int(s) for s in shape.split(","))))
        else:
            raise ValueError(f"{path}: unknown header line {text[i]!r}")
        i += 1
    values = np.array([float(v) for v in text[i + 1:]], dtype=float)
    expected = sum(int(np.prod(s)) for _, s in manifest)
    if values.size != expected:
        raise ValueError(f"{path}: {values.size} values but manifest declares {expected}")
    out, pos = {}, 0
    for name, shape in manifest:
        n = int(np.prod(shape))
        out[name] = values[pos:pos + n].reshape(shape)
        pos += n
    return meta, out


def load_checkpoint(path: str | Path, model) -> dict[str, str]:
    """Load parameters into ``model`` in place; shapes and names must match exactly."""
    meta, arrays = read_checkpoint(path)
    params = model.params()
    if list(arrays) != list(params):
        raise ValueError(f"{path}: parameter names differ from the model")
    for name, arr in arrays.items():
        if arr.shape != params[name].shape:
            raise ValueError(f"{path}: shape mismatch for {name}: file {arr.shape}, model {params[name].shape}")
    for name, arr in arrays.items():
        params[name][...] = arr
    return meta
