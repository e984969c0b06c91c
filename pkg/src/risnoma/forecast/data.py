"""Synthetic endpoint histories, min-max scaling and differencing."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Rect:
    """Axis-aligned sampling range ``[x0, x1] x [y0, y1]`` in meters."""

    x: tuple[float, float]
    y: tuple[float, float]

    def __post_init__(self):
        if not (self.x[1] > self.x[0] and self.y[1] > self.y[0]):
            raise ValueError(f"empty rectangle {self.x} x {self.y}")

    def contains(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(pts)
        return ((pts[:, 0] >= self.x[0]) & (pts[:, 0] <= self.x[1])
                & (pts[:, 1] >= self.y[0]) & (pts[:, 1] <= self.y[1]))


@dataclass(frozen=True)
class HistorySet:
    """6N samples, each ``(x_init, y_init, x_final, y_final)``."""

    samples: np.ndarray
    n: int

    @property
    def train(self) -> np.ndarray:
        return self.samples[: 4 * self.n]

    @property
    def test(self) -> np.ndarray:
        return self.samples[4 * self.n: 5 * self.n]

    @property
    def inference(self) -> np.ndarray:
        return self.samples[5 * self.n:]


def _uniform(rng: np.random.Generator, lo: float, hi: float, size: int, open_low: bool, open_high: bool):
    u = rng.random(size)                    # [0, 1)
    if open_low and not open_high:
        u = 1.0 - u                         # (0, 1]
    v = lo + (hi - lo) * u
    if open_high:
        v = np.minimum(v, np.nextafter(hi, lo))
    return v


def generate_history(initial: Rect, final: Rect, n: int, seed: int,
                     open_initial_y_top: bool = True, open_final_y_bottom: bool = True) -> HistorySet:
    """Uniform endpoint pairs; the initial y-range is half-open at the top and
    the final y-range half-open at the bottom by default."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    m = 6 * n
    xi = initial.x[0] + (initial.x[1] - initial.x[0]) * rng.random(m)
    yi = _uniform(rng, *initial.y, m, open_low=False, open_high=open_initial_y_top)
    xf = final.x[0] + (final.x[1] - final.x[0]) * rng.random(m)
    yf = _uniform(rng, *final.y, m, open_low=open_final_y_bottom, open_high=False)
    if open_final_y_bottom:
        yf = np.maximum(yf, np.nextafter(final.y[0], final.y[1]))
    return HistorySet(np.column_stack([xi, yi, xf, yf]), n)


@dataclass(frozen=True)
class NormStats:
    s_min: float
    s_max: float

    def __post_init__(self):
        if not self.s_max > self.s_min:
            raise ValueError(f"degenerate range: s_min={self.s_min}, s_max={self.s_max}")

    @classmethod
    def fit(cls, values) -> "NormStats":
        v = np.asarray(values, dtype=float)
        return cls(float(v.min()), float(v.max()))

    @property
    def span(self) -> float:
        return self.s_max - self.s_min


def normalize(s, stats: NormStats):
    return (np.asarray(s, dtype=float) - stats.s_min) / stats.span


def denormalize(s, stats: NormStats):
    return np.asarray(s, dtype=float) * stats.span + stats.s_min


def difference(series, d: int) -> np.ndarray:
    """Apply ``(1 - L)^d``; the result is ``d`` entries shorter."""
    x = np.asarray(series, dtype=float)
    if d < 0:
        raise ValueError("d must be >= 0")
    if len(x) <= d:
        raise ValueError(f"series of length {len(x)} too short for d={d}")
    for _ in range(d):
        x = x[1:] - x[:-1]
    return x


def integrate(diffed, heads) -> np.ndarray:
    """Invert :func:`difference` given the first value of each intermediate series.

    ``heads[k]`` is the first element of the ``k``-times differenced series,
    so ``heads[0]`` is the first original value.
    """
    x = np.asarray(diffed, dtype=float)
    for head in reversed(list(heads)):
        x = np.concatenate([[head], head + np.cumsum(x)])
    return x


def difference_heads(series, d: int) -> list[float]:
    x = np.asarray(series, dtype=float)
    heads = []
    for _ in range(d):
        heads.append(float(x[0]))
        x = x[1:] - x[:-1]
    return heads
