"""Q-networks, target rules and the learning step for the three agent variants.

``double``  plain heads, double-DQN target, uniform replay.
``dueling`` dueling heads, max target evaluated on the target network, PER.
``d3qn``    dueling heads, double-DQN target, PER.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..neural import (DenseNet, GradientTape, backward, copy_params, forward, forward_cached,
                      sgd_step)
from .replay import PrioritizedReplay
from .spaces import HeadLayout

VARIANTS = ("double", "dueling", "d3qn")


# -- scalar target rules ----------------------------------------------------------------

def dueling_q(value: float, advantages) -> np.ndarray:
    """``V + A - mean(A)``.

    The mean is taken around the first advantage, so a constant advantage
    vector centres to exact zeros and ``Q == V`` holds bit for bit.
    """
    a = np.asarray(advantages, dtype=float)
    d = a - a[0]
    return value + (d - d.sum() / d.size)


def vanilla_target(reward: float, terminal: bool, gamma: float, q_next) -> float:
    return float(reward) if terminal else float(reward + gamma * np.max(q_next))


def double_dqn_target(reward: float, terminal: bool, gamma: float, q_current_next, q_target_next) -> float:
    """Select with the current network, evaluate with the target network."""
    if terminal:
        return float(reward)
    a_star = int(np.argmax(q_current_next))
    return float(reward + gamma * np.asarray(q_target_next)[a_star])


def d3qn_target(reward: float, terminal: bool, gamma: float, q_current_next,
                target_value: float, target_advantages) -> float:
    if terminal:
        return float(reward)
    return double_dqn_target(reward, False, gamma, q_current_next, dueling_q(target_value, target_advantages))


# -- factored network -------------------------------------------------------------------

class FactoredQNet:
    """Dense trunk with one linear read-out covering every head.

    With ``dueling`` the read-out has one extra leading unit, the state value
    shared by all heads; each head's advantages are centred on their own mean.
    """

    def __init__(self, input_dim: int, layout: HeadLayout, hidden: list[int], dueling: bool,
                 rng: np.random.Generator):
        self.layout = layout
        self.dueling = dueling
        n_out = layout.n_outputs + (1 if dueling else 0)
        sizes = [input_dim] + list(hidden) + [n_out]
        self.net = DenseNet.build(sizes, ["relu"] * len(hidden) + ["identity"], rng)
        self._head_of = layout.head_of_output()
        self._offsets = layout.offsets
        self._sizes = layout.sizes
        n = layout.n_outputs
        self._first = np.zeros((n, n))
        self._first[self._offsets[self._head_of], np.arange(n)] = 1.0
        same = self._head_of[:, None] == self._head_of[None, :]
        self._block_mean = same / self._sizes[self._head_of][None, :]

    def params(self):
        return self.net.params()

    def head_values(self, raw: np.ndarray) -> np.ndarray:
        """Per-head action values, shape (B, n_outputs)."""
        raw = np.atleast_2d(raw)
        if not self.dueling:
            return raw
        v, adv = raw[:, :1], raw[:, 1:]
        # shift each head by its first output (an exact 0/1 product), then subtract the block mean
        d = adv - adv @ self._first
        return v + (d - d @ self._block_mean)

    def q_values(self, x) -> np.ndarray:
        return self.head_values(forward(self.net, np.atleast_2d(x)))

    def joint_q(self, qcols: np.ndarray, actions: np.ndarray, active: np.ndarray) -> np.ndarray:
        """Mean over active heads of the chosen action values."""
        cols = self._offsets[None, :] + np.where(active, actions, 0)
        picked = np.take_along_axis(qcols, cols, axis=1)
        return (picked * active).sum(axis=1) / active.sum(axis=1)

    def greedy(self, qcols: np.ndarray, valid: np.ndarray) -> np.ndarray:
        """Per-head masked argmax (lowest index on ties), shape (B, n_heads)."""
        masked = np.where(valid, qcols, -math.inf)
        out = np.zeros((qcols.shape[0], self.layout.n_heads), dtype=np.int64)
        for h, (o, s) in enumerate(zip(self._offsets, self._sizes)):
            out[:, h] = np.argmax(masked[:, o:o + s], axis=1)
        return out

    def upstream(self, dq: np.ndarray, actions: np.ndarray, active: np.ndarray) -> np.ndarray:
        """d(sum_b dq_b * Q_b) / d(raw outputs) for the joint Q of each sample."""
        b = dq.shape[0]
        n_active = active.sum(axis=1)
        coef = dq / n_active                                       # (B,)
        grad = np.zeros((b, self.layout.n_outputs))
        rows = np.repeat(np.arange(b), self.layout.n_heads)
        cols = (self._offsets[None, :] + np.where(active, actions, 0)).reshape(-1)
        weights = (active * coef[:, None]).reshape(-1)
        # heads occupy disjoint columns, so no (row, col) pair repeats
        grad[rows, cols] = weights
        if not self.dueling:
            return grad
        # centring: every output of an active head also receives -coef/size
        centre = (active * coef[:, None]) / self._sizes[None, :]   # (B, H)
        grad -= centre[:, self._head_of]
        return np.concatenate([dq[:, None], grad], axis=1)


@dataclass
class QNetworkPair:
    current: FactoredQNet
    target: FactoredQNet

    @classmethod
    def build(cls, input_dim: int, layout: HeadLayout, hidden: list[int], dueling: bool,
              rng: np.random.Generator) -> "QNetworkPair":
        cur = FactoredQNet(input_dim, layout, hidden, dueling, rng)
        tgt = FactoredQNet(input_dim, layout, hidden, dueling, rng)
        copy_params(tgt, cur)
        return cls(cur, tgt)

    def sync(self) -> None:
        copy_params(self.target, self.current)


def should_sync(episode: int, period: int) -> bool:
    """Sync at episodes 1, 1+T, 1+2T, ... (1-based)."""
    return (episode - 1) % period == 0


@dataclass
class LearnResult:
    loss: float
    td: np.ndarray
    targets: np.ndarray
    q: np.ndarray


class Learner:
    def __init__(self, variant: str, pair: QNetworkPair, buffer: PrioritizedReplay, lr: float,
                 gamma: float, grad_clip: float | None = None):
        if variant not in VARIANTS:
            raise ValueError(f"unknown agent variant {variant!r}")
        self.variant = variant
        self.pair = pair
        self.buffer = buffer
        self.lr = lr
        self.gamma = gamma
        self.grad_clip = grad_clip

    def targets(self, r, term, s2, act2, valid2) -> np.ndarray:
        cur, tgt = self.pair.current, self.pair.target
        q_t = tgt.q_values(s2)
        if self.variant == "dueling":
            a_star = tgt.greedy(q_t, valid2)
        else:
            a_star = cur.greedy(cur.q_values(s2), valid2)
        boot = tgt.joint_q(q_t, a_star, act2)
        return np.where(term, r, r + self.gamma * boot)

    def loss_and_tape(self, s, a, act, y, w) -> tuple[float, np.ndarray, np.ndarray, GradientTape]:
        net = self.pair.current
        cache = forward_cached(net.net, s)
        q = net.joint_q(net.head_values(cache.acts[-1]), a, act)
        td = y - q
        b = len(y)
        loss = float(np.mean(w * td * td))
        dq = -2.0 * w * td / b
        tape = backward(net.net, cache, net.upstream(dq, a, act))
        return loss, td, q, tape

    def learn_batch(self, idx: np.ndarray, weights: np.ndarray) -> LearnResult:
        buf = self.buffer
        y = self.targets(buf.r[idx], buf.term[idx], buf.s2[idx], buf.act2[idx], buf.valid2[idx])
        loss, td, q, tape = self.loss_and_tape(buf.s[idx], buf.a[idx], buf.act[idx], y, weights)
        if not math.isfinite(loss):
            bad = int(idx[np.argmax(~np.isfinite(td))])
            raise FloatingPointError(f"non-finite TD loss; offending transition slot {bad} "
                                     f"(reward {buf.r[bad]}, terminal {bool(buf.term[bad])})")
        step = tape.scaled(-1.0)
        if self.grad_clip is not None:
            norm = step.norm()
            if norm > self.grad_clip:
                step = step.scaled(self.grad_clip / norm)
        sgd_step(self.pair.current, step, self.lr)
        buf.update(idx, np.abs(td))
        return LearnResult(loss, td, y, q)
