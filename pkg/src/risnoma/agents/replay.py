"""Proportional prioritized experience replay over flat numpy storage."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class Transition:
    features: np.ndarray
    action: np.ndarray          # one index per head
    active: np.ndarray          # heads scored in this epoch
    reward: float
    next_features: np.ndarray
    next_active: np.ndarray
    next_valid: np.ndarray      # valid outputs of every head in the next state
    terminal: bool
    priority: float = 1.0


class PrioritizedReplay:
    def __init__(self, capacity: int, feat_dim: int, n_heads: int, n_outputs: int,
                 omega: float = 0.6, eps: float = 1e-6):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.omega = omega
        self.eps = eps
        self.s = np.zeros((capacity, feat_dim))
        self.s2 = np.zeros((capacity, feat_dim))
        self.a = np.zeros((capacity, n_heads), dtype=np.int64)
        self.act = np.zeros((capacity, n_heads), dtype=bool)
        self.act2 = np.zeros((capacity, n_heads), dtype=bool)
        self.valid2 = np.zeros((capacity, n_outputs), dtype=bool)
        self.r = np.zeros(capacity)
        self.term = np.zeros(capacity, dtype=bool)
        self.prio = np.zeros(capacity)
        self.size = 0
        self.pos = 0
        self.max_prio = 1.0

    def __len__(self) -> int:
        return self.size

    def add(self, t: Transition, priority: float | None = None) -> None:
        p = self.max_prio if priority is None else float(priority)
        if not p > 0:
            raise ValueError("priority must be > 0")
        k = self.pos
        self.s[k], self.s2[k] = t.features, t.next_features
        self.a[k], self.act[k], self.act2[k] = t.action, t.active, t.next_active
        self.valid2[k] = t.next_valid
        self.r[k], self.term[k], self.prio[k] = t.reward, t.terminal, p
        self.pos = (self.pos + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def probabilities(self) -> np.ndarray:
        w = (self.prio[: self.size] + self.eps) ** self.omega
        return w / w.sum()

    def sample(self, batch: int, rng: np.random.Generator, beta: float) -> tuple[np.ndarray, np.ndarray]:
        """Indices and importance weights ``(N*P)^-beta / max``.

        Draws without replacement unless ``batch`` exceeds the stored count.
        """
        if self.size == 0:
            raise ValueError("replay buffer is empty")
        probs = self.probabilities()
        if batch > self.size:
            idx = rng.choice(self.size, batch, replace=True, p=probs)
        else:
            # Gumbel top-k: same law as drawing one at a time without replacement
            keys = np.log(probs) + rng.gumbel(size=self.size)
            top = np.argpartition(-keys, batch - 1)[:batch]
            idx = top[np.argsort(-keys[top], kind="stable")]
        w = (self.size * probs[idx]) ** (-beta)
        return idx, w / w.max()

    def update(self, idx: np.ndarray, td_abs: np.ndarray) -> None:
        p = np.maximum(np.abs(td_abs), self.eps)
        self.prio[idx] = p
        self.max_prio = max(self.max_prio, float(p.max()))
