"""Central finite differences used as the gradient oracle in several test files."""
from __future__ import annotations

import numpy as np

STEP = 1e-5
TOL = 1e-4


def numeric_grads(loss, arrays: dict[str, np.ndarray], step: float = STEP) -> dict[str, np.ndarray]:
    out = {}
    for name, arr in arrays.items():
        g = np.zeros_like(arr)
        flat, gflat = arr.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + step
            up = loss()
            flat[i] = keep - step
            down = loss()
            flat[i] = keep
            gflat[i] = (up - down) / (2 * step)
        out[name] = g
    return out


def max_rel_error(analytic: dict[str, np.ndarray], numeric: dict[str, np.ndarray], floor: float = 1e-6) -> float:
    """Largest entrywise relative error; entries whose gradients are both below ``floor`` are ignored."""
    worst = 0.0
    for name, n in numeric.items():
        a = np.asarray(analytic[name])
        scale = np.maximum(np.abs(a), np.abs(n))
        mask = scale > floor
        if mask.any():
            worst = max(worst, float(np.max(np.abs(a - n)[mask] / scale[mask])))
    return worst
