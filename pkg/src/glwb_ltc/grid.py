"""Time-invariant log-spaced grid for the account value, with an absorbing zero node."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)

_SNAP = 1e-9


@dataclass(frozen=True)
class AccountGrid:
    """Nodes ``A_j = P * exp((j - j_min) * sigma_F * sqrt(dt))`` for ``j >= 1`` and ``A_0 = 0``."""

    P: float
    step: float  # log spacing sigma_F * sqrt(dt)
    j_min: int
    j_max: int
    values: np.ndarray

    @classmethod
    def build(cls, P: float, sigma_F: float, dt: float, f_A: float) -> "AccountGrid":
        if not f_A > 1:
            raise ValueError("grid factor f_A must exceed 1")
        if not P > 0:
            raise ValueError("premium must be positive")
        step = sigma_F * math.sqrt(dt)
        # smallest j* with P e^{j* s} >= P / f_A is -floor(ln f_A / s)
        n_below = math.floor(math.log(f_A) / step + _SNAP)
        j_min = n_below + 1
        j_max = n_below + j_min
        j = np.arange(j_max + 1)
        values = P * np.exp((j - j_min) * step)
        values[0] = 0.0
        values[j_min] = P
        return cls(P, step, j_min, j_max, values)

    def __len__(self) -> int:
        return self.j_max + 1

    def successors(self, j: int, R: float, dt: float):
        """Nearest nodes below and above ``A_j (1 + R dt)``, floored at 1 and capped at ``j_max``."""
        if j < 1:
            raise ValueError("the zero node is absorbing and has no account successors")
        a = self.values
        target = a[j] * (1.0 + R * dt)
        below = [s for s in range(1, j) if target >= a[s]]
        j_d = max(below) if below else 1
        above = [s for s in range(j + 1, self.j_max + 1) if target <= a[s]]
        j_u = min(above) if above else self.j_max
        return j_d, j_u

    def locate(self, value):
        """Left index and right weight for linear interpolation in ``A``.

        Returns ``(idx, w, clamped)`` with ``value ~ (1-w) A[idx] + w A[idx+1]``;
        queries above ``A_{j_max}`` are clamped to the top node.
        """
        v = np.asarray(value, dtype=float)
        if np.any(v < 0):
            raise ValueError("account value must be non-negative")
        a = self.values
        with np.errstate(divide="ignore"):
            x = np.log(np.where(v > 0, v, 1.0) / self.P) / self.step + self.j_min
        x = np.where(v > 0, x, 0.0)
        near = np.rint(x)
        x = np.where(np.abs(x - near) < _SNAP, near, x)
        clamped = x > self.j_max
        if np.any(clamped):
            log.debug("clamping %d queries above the top grid node", int(clamped.sum()))
        idx = np.floor(x).astype(np.int64)
        idx = np.clip(idx, 0, self.j_max - 1)
        below_first = (v > 0) & (x < 1)
        idx = np.where(below_first, 0, idx)
        lo = a[idx]
        hi = a[idx + 1]
        w = np.clip((v - lo) / (hi - lo), 0.0, 1.0)
        w = np.where(x == idx, 0.0, w)
        w = np.where((x == idx + 1) | clamped, 1.0, w)
        if v.ndim == 0:
            return int(idx), float(w), bool(clamped)
        return idx, w, clamped

    def interpolate(self, values: np.ndarray, query) -> np.ndarray:
        """Evaluate a function sampled on the grid (last axis) at ``query`` points."""
        idx, w, _ = self.locate(np.asarray(query, dtype=float))
        return values[..., idx] * (1.0 - w) + values[..., idx + 1] * w
