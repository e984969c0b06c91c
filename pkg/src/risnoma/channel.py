"""Path loss, Rician links, RIS phase configuration and effective channels.

All quantities here are linear SI: powers in watts, gains as linear power
ratios. Link amplitudes are ``sqrt(path_loss)``; the path-loss value is a
power gain.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .gridworld import GridMap, segment_blocked

SPEED_OF_LIGHT = 299_792_458.0


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0) / 1000.0


def linear_to_db(x: float) -> float:
    return 10.0 * math.log10(x)


@dataclass(frozen=True)
class PathLossParams:
    c_ref: float = 1e-3
    gamma_ai: float = 3.5
    gamma_ri: float = 2.8
    gamma_ai_ris: float = 2.2

    def __post_init__(self):
        if not self.c_ref > 0:
            raise ValueError(f"c_ref must be > 0, got {self.c_ref}")
        for name in ("gamma_ai", "gamma_ri", "gamma_ai_ris"):
            g = getattr(self, name)
            if g < 0:
                raise ValueError(f"{name} must be >= 0, got {g}")
            if g < 2:
                warnings.warn(f"{name}={g} is below free-space exponent 2", stacklevel=2)


def path_loss(d: float | np.ndarray, gamma: float, params: PathLossParams | float = PathLossParams()):
    """Linear power gain ``C * d**-gamma``."""
    c_ref = params.c_ref if isinstance(params, PathLossParams) else float(params)
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise ValueError("path_loss: distance must be > 0")
    out = c_ref * d ** (-gamma)
    return float(out) if out.ndim == 0 else out


def rician_factor(tx: Sequence[float], rx: Sequence[float], grid: GridMap, a_bar: float) -> float:
    if a_bar < 0:
        raise ValueError("a_bar must be >= 0")
    return 0.0 if segment_blocked(tx, rx, grid) else float(a_bar)


def rician_compose(amplitude, alpha, los, nlos):
    """``amplitude * (sqrt(alpha/(alpha+1)) * los + sqrt(1/(alpha+1)) * nlos)``.

    Broadcasts over leading axes; ``alpha`` may be an array.
    """
    alpha = np.asarray(alpha, dtype=float)
    k_los = np.sqrt(alpha / (alpha + 1.0))
    k_nlos = np.sqrt(1.0 / (alpha + 1.0))
    return amplitude * (k_los * los + k_nlos * nlos)


def complex_normal(rng: np.random.Generator, size) -> np.ndarray:
    """Circular complex Gaussian with unit variance per entry."""
    return (rng.standard_normal(size) + 1j * rng.standard_normal(size)) / math.sqrt(2.0)


def draw_link(dist: float, gamma: float, alpha: float, dim: int, rng: np.random.Generator,
              params: PathLossParams | float = PathLossParams(), los: np.ndarray | None = None) -> np.ndarray:
    """One Rician link realization of length ``dim``."""
    if dim < 1:
        raise ValueError("dim must be >= 1")
    amp = math.sqrt(path_loss(dist, gamma, params))
    los = np.ones(dim, dtype=complex) if los is None else np.asarray(los, dtype=complex)
    if los.shape != (dim,):
        raise ValueError(f"los has shape {los.shape}, expected ({dim},)")
    return rician_compose(amp, alpha, los, complex_normal(rng, dim))


# -- counter-based normals --------------------------------------------------------------
# Fading for (seed, episode, epoch, cell, link, index) must be reproducible no
# matter which order cells are queried in, so draws are keyed by hashing the
# coordinates instead of advancing a stream.

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK = (1 << 64) - 1


def _splitmix(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = x + _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
        return z ^ (z >> np.uint64(31))


def _splitmix_int(x: int) -> int:
    z = (x + 0x9E3779B97F4A7C15) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


@lru_cache(maxsize=4096)
def block_key(*coords: int) -> int:
    """64-bit key of a coherence block, e.g. ``(seed, episode, epoch)``."""
    h = 0
    for c in coords:
        h = _splitmix_int(h ^ (int(c) & _MASK))
    return h


def link_key(cell: np.ndarray | int, link: int, idx: np.ndarray | int) -> np.ndarray:
    """Key of one link entry inside a block: cell index (-1 for AP-RIS), link class, element."""
    return ((np.asarray(cell, dtype=np.int64) + 1) << 24) | (link << 16) | np.asarray(idx, dtype=np.int64)


def hashed_complex_normals(block: int, keys) -> np.ndarray:
    """Unit-variance circular complex normals, one per entry of ``keys``, within ``block``.

    One 64-bit hash per entry, split into two 32-bit uniforms for Box-Muller.
    """
    keys = np.asarray(keys)
    if keys.size <= _SMALL:
        # integer hashing is exact either way; plain ints skip numpy's per-op overhead
        h = np.array([_splitmix_int((int(v) & _MASK) ^ block) for v in keys.reshape(-1).tolist()],
                     dtype=np.uint64).reshape(keys.shape)
    else:
        k = (keys if keys.dtype == np.uint64 else keys.astype(np.int64).astype(np.uint64)) ^ np.uint64(block)
        h = _splitmix(k)
    u1 = ((h >> np.uint64(32)).astype(np.float64) + 1.0) * _U32
    u2 = (h & _LOW32).astype(np.float64) * _U32
    return np.sqrt(-np.log(u1)) * np.exp(2j * np.pi * u2)


_U32 = 2.0 ** -32
_SMALL = 64
_LOW32 = np.uint64(0xFFFFFFFF)


# -- RIS phases ---------------------------------------------------------------------------

def quantize_phase(n0: int, bits: int) -> float:
    levels = 2 ** bits
    if not 0 <= n0 < levels:
        raise ValueError(f"phase index {n0} outside [0, {levels})")
    return 2.0 * math.pi * n0 / levels


@dataclass(frozen=True)
class PhaseConfig:
    thetas: np.ndarray
    bits: int
    k_total: int
    k_per_sub: int

    def __post_init__(self):
        if self.bits < 1:
            raise ValueError("bits must be >= 1")
        if self.k_per_sub < 1 or self.k_total % self.k_per_sub:
            raise ValueError(f"K={self.k_total} is not a multiple of K_sub={self.k_per_sub}")
        thetas = np.asarray(self.thetas, dtype=float)
        if thetas.shape != (self.m,):
            raise ValueError(f"expected {self.m} phases, got shape {thetas.shape}")
        step = 2 * math.pi / 2 ** self.bits
        idx = thetas / step
        if np.any(np.abs(idx - np.round(idx)) > 1e-9) or np.any(thetas < 0) or np.any(thetas >= 2 * math.pi):
            raise ValueError("phases must lie on the 2*pi/2**bits grid within [0, 2*pi)")
        object.__setattr__(self, "thetas", thetas)

    @property
    def m(self) -> int:
        return self.k_total // self.k_per_sub

    @classmethod
    def from_indices(cls, indices: Sequence[int], bits: int, k_total: int, k_per_sub: int) -> "PhaseConfig":
        return cls(np.array([quantize_phase(int(n), bits) for n in indices]), bits, k_total, k_per_sub)

    @property
    def coefficients(self) -> np.ndarray:
        return np.exp(1j * self.thetas)


def _thetas(phase) -> np.ndarray:
    return phase.thetas if isinstance(phase, PhaseConfig) else np.asarray(phase, dtype=float)


def cascade(h: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Per-sub-surface AP-RIS-robot channel ``diag(h^H) g``."""
    return np.conj(h) * g


def effective_channel(h: np.ndarray, phase, g: np.ndarray, l: complex) -> complex:
    """``h^H diag(exp(j theta)) g + l`` for one robot."""
    h = np.asarray(h, dtype=complex)
    g = np.asarray(g, dtype=complex)
    thetas = _thetas(phase)
    if not (h.shape == g.shape == thetas.shape):
        raise ValueError(f"length mismatch: h{h.shape}, g{g.shape}, theta{thetas.shape}")
    return complex(np.sum(cascade(h, g) * np.exp(1j * thetas)) + l)


def steering(src: Sequence[float], ris: Sequence[float], m: int, k_per_sub: int,
             spacing_wavelengths: float) -> np.ndarray:
    """Unit-modulus LOS vector over ``m`` sub-surfaces lined up along x.

    Phase slope per sub-surface is ``2*pi*s*K_sub*cos_x`` where ``cos_x`` is the
    direction cosine of ``src`` seen from the RIS. Indices are centred so no
    sub-surface has a position-independent phase.
    """
    v = np.asarray(src, dtype=float) - np.asarray(ris, dtype=float)
    cos_x = v[0] / np.linalg.norm(v)
    kappa = 2.0 * math.pi * spacing_wavelengths * k_per_sub * cos_x
    idx = np.arange(m) - (m - 1) / 2.0
    return np.exp(1j * kappa * idx)


@dataclass
class ChannelSet:
    """Channels of X robots for one coherence block.

    ``extra_power`` carries the zero-mean fading power folded in when working
    with expected values (``direct_extra`` is its share on the direct link);
    both are zero for sampled realizations.
    """

    l: np.ndarray              # (X,)
    g: np.ndarray              # (X, M)
    h: np.ndarray              # (M,)
    alpha_ai: np.ndarray       # (X,)
    alpha_ri: np.ndarray       # (X,)
    alpha_ai_ris: float
    extra_power: np.ndarray | None = None
    direct_extra: np.ndarray | None = None

    def __post_init__(self):
        x, m = self.g.shape
        if self.h.shape != (m,) or self.l.shape != (x,):
            raise ValueError("ChannelSet: inconsistent vector lengths")
        if self.extra_power is None:
            self.extra_power = np.zeros(x)
        if self.direct_extra is None:
            self.direct_extra = np.zeros(x)

    @property
    def x(self) -> int:
        return self.g.shape[0]

    @property
    def m(self) -> int:
        return self.g.shape[1]

    def subset(self, rows) -> "ChannelSet":
        rows = np.asarray(rows)
        return ChannelSet(self.l[rows], self.g[rows], self.h, self.alpha_ai[rows], self.alpha_ri[rows],
                          self.alpha_ai_ris, self.extra_power[rows], self.direct_extra[rows])

    def effective(self, thetas, ris: bool = True) -> np.ndarray:
        if not ris:
            return self.l.copy()
        return (self.g * (np.conj(self.h) * np.exp(1j * np.asarray(thetas, float)))).sum(axis=-1) + self.l

    def gains(self, thetas, ris: bool = True) -> np.ndarray:
        """|H_i|^2 per robot, plus folded fading power in expected-value mode.

        ``thetas`` may be (M,) or (X, M).
        """
        extra = self.extra_power if ris else self.direct_extra
        return np.abs(self.effective(thetas, ris)) ** 2 + extra


@dataclass(frozen=True)
class ChannelSettings:
    pathloss: PathLossParams = PathLossParams()
    alpha_bar: float = 3.0
    carrier_hz: float = 2.4e9
    element_spacing_m: float | None = None
    k_total: int = 8
    k_per_sub: int = 4
    expected: bool = False
    redraw_ap_ris: bool = False

    @property
    def m(self) -> int:
        return self.k_total // self.k_per_sub

    @property
    def spacing_wavelengths(self) -> float:
        lam = SPEED_OF_LIGHT / self.carrier_hz
        return 0.5 if self.element_spacing_m is None else self.element_spacing_m / lam


class ChannelField:
    """Large-scale channel state of every free cell, precomputed once per map.

    ``realize`` composes per-epoch channels for arbitrary cells; fading is keyed
    by (seed, episode, epoch, cell) so repeated queries inside one coherence
    block agree.
    """

    def __init__(self, grid: GridMap, settings: ChannelSettings):
        if settings.k_total % settings.k_per_sub:
            raise ValueError(f"K={settings.k_total} is not a multiple of K_sub={settings.k_per_sub}")
        self.grid = grid
        self.settings = settings
        m = settings.m
        pl = settings.pathloss
        ap = np.asarray(grid.ap_pos, float)
        ris = np.asarray(grid.ris_pos, float)
        n_cols, n_rows = grid.n_cols, grid.n_rows
        self.amp_ai = np.zeros(grid.n_cells)
        self.amp_ri = np.zeros(grid.n_cells)
        self.alpha_ai = np.zeros(grid.n_cells)
        self.alpha_ri = np.zeros(grid.n_cells)
        self.g_los = np.ones((grid.n_cells, m), dtype=complex)
        sw = settings.spacing_wavelengths
        for col in range(n_cols):
            for row in range(n_rows):
                if not grid.free[col, row]:
                    continue
                idx = grid.cell_index((col, row))
                pos = np.asarray(grid.cell_center((col, row)))
                self.amp_ai[idx] = math.sqrt(path_loss(np.linalg.norm(pos - ap), pl.gamma_ai, pl))
                self.amp_ri[idx] = settings.k_per_sub * math.sqrt(
                    path_loss(np.linalg.norm(pos - ris), pl.gamma_ri, pl))
                self.alpha_ai[idx] = rician_factor(ap, pos, grid, settings.alpha_bar)
                self.alpha_ri[idx] = rician_factor(ris, pos, grid, settings.alpha_bar)
                self.g_los[idx] = steering(pos, ris, m, settings.k_per_sub, sw)
        self.amp_h = math.sqrt(path_loss(np.linalg.norm(ris - ap), pl.gamma_ai_ris, pl))
        self.alpha_h = rician_factor(ap, ris, grid, settings.alpha_bar)
        self.h_los = steering(ap, ris, m, settings.k_per_sub, sw)
        # per-cell LOS means and NLOS scales for the fast gains path
        self._l_mean = self.amp_ai * np.sqrt(self.alpha_ai / (self.alpha_ai + 1.0))
        self._l_sd = self.amp_ai * np.sqrt(1.0 / (self.alpha_ai + 1.0))
        k_ri = np.sqrt(self.alpha_ri / (self.alpha_ri + 1.0))
        self._g_mean = (self.amp_ri * k_ri)[:, None] * self.g_los
        self._g_sd = self.amp_ri * np.sqrt(1.0 / (self.alpha_ri + 1.0))
        self._h_cache: dict[tuple, np.ndarray] = {}
        # per-cell link keys: column 0 the direct link, then one per sub-surface
        n_cells = grid.n_cells
        cells = np.arange(n_cells)
        self._keys = np.concatenate(
            [link_key(cells, 0, 0)[:, None], link_key(np.repeat(cells, m), 1, np.tile(np.arange(m), n_cells))
             .reshape(n_cells, m)], axis=1).astype(np.uint64)

    @property
    def m(self) -> int:
        return self.settings.m

    def _h(self, seed: int, episode: int, epoch: int) -> np.ndarray:
        if self.settings.expected:
            return rician_compose(self.amp_h, self.alpha_h, self.h_los, 0.0)
        block = block_key(seed, episode, epoch if self.settings.redraw_ap_ris else -1)
        noise = hashed_complex_normals(block, link_key(-1, 2, np.arange(self.m)))
        return rician_compose(self.amp_h, self.alpha_h, self.h_los, noise)

    def _h_cached(self, seed: int, episode: int, epoch: int) -> np.ndarray:
        key = (seed, episode, epoch if self.settings.redraw_ap_ris else -1)
        h = self._h_cache.get(key)
        if h is None:
            if len(self._h_cache) > 256:
                self._h_cache.clear()
            h = self._h_cache[key] = self._h(seed, episode, epoch)
        return h

    def cell_indices(self, cells) -> np.ndarray:
        n_rows = self.grid.n_rows
        return np.array([int(c) * n_rows + int(r) for c, r in cells], dtype=np.int64)

    def gains(self, cells, thetas, ris: bool, seed: int, episode: int, epoch: int) -> np.ndarray:
        """``|H_i|^2`` for robots at ``cells``; same values as ``realize(...).gains(...)``."""
        if self.settings.expected:
            return self.realize(cells, seed, episode, epoch).gains(thetas, ris)
        idx = self.cell_indices(cells)
        x, m = len(idx), self.m
        block = block_key(seed, episode, epoch)
        if not ris:
            noise = hashed_complex_normals(block, self._keys[idx, 0])
            return np.abs(self._l_mean[idx] + self._l_sd[idx] * noise) ** 2
        noise = hashed_complex_normals(block, self._keys[idx]).reshape(x, m + 1)
        l = self._l_mean[idx] + self._l_sd[idx] * noise[:, 0]
        g = self._g_mean[idx] + self._g_sd[idx][:, None] * noise[:, 1:]
        # thetas may be (M,) shared by all robots or (X, M) per robot
        coef = np.conj(self._h_cached(seed, episode, epoch)) * np.exp(1j * np.asarray(thetas, dtype=float))
        return np.abs((g * coef).sum(axis=-1) + l) ** 2

    def realize(self, cells: Sequence[tuple[int, int]], seed: int, episode: int, epoch: int) -> ChannelSet:
        """Channels of the robots at ``cells`` in coherence block (seed, episode, epoch)."""
        idx = self.cell_indices(cells)
        x, m = len(idx), self.m
        a_ai, a_ri = self.alpha_ai[idx], self.alpha_ri[idx]
        amp_ai, amp_ri = self.amp_ai[idx], self.amp_ri[idx]
        h = self._h(seed, episode, epoch)
        if self.settings.expected:
            l = rician_compose(amp_ai, a_ai, 1.0, 0.0)
            g = rician_compose(amp_ri[:, None], a_ri[:, None], self.g_los[idx], 0.0)
            var_l = amp_ai ** 2 / (a_ai + 1.0)
            var_g = amp_ri ** 2 / (a_ri + 1.0)
            var_h = self.amp_h ** 2 / (self.alpha_h + 1.0)
            mean_h2 = np.abs(h) ** 2
            # Var(conj(h_m) g_m) for independent Rician factors, summed over sub-surfaces
            refl = (mean_h2[None, :] * var_g[:, None] + var_h * np.abs(g) ** 2
                    + var_h * var_g[:, None]).sum(axis=1)
            return ChannelSet(l, g, h, a_ai, a_ri, self.alpha_h, extra_power=var_l + refl, direct_extra=var_l)
        block = block_key(seed, episode, epoch)
        keys = np.concatenate([link_key(idx, 0, 0), link_key(np.repeat(idx, m), 1, np.tile(np.arange(m), x))])
        noise = hashed_complex_normals(block, keys)
        l = rician_compose(amp_ai, a_ai, 1.0, noise[:x])
        g = rician_compose(amp_ri[:, None], a_ri[:, None], self.g_los[idx], noise[x:].reshape(x, m))
        return ChannelSet(l, g, h, a_ai, a_ri, self.alpha_h)
