"""Truncated recombining binomial tree for the CIR short rate.

Nodes sit on a uniform grid in ``sqrt(r)``; only the band of indices
``k_min(i) <= k <= k_max(i)`` reachable from the root is stored, and the
repeated zero nodes below ``k_min`` collapse into a single floor node.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

from .params import MarketParams


@dataclass
class RateLattice:
    """Flat storage of a banded rate tree.

    Node ``(i, k)`` lives at ``offset[i] + k - k_min[i]``. Successor indices
    ``kd``/``ku`` are absolute ``k`` values at step ``i + 1``; ``kd_local`` and
    ``ku_local`` are the same positions relative to that step's band.
    """

    N: int
    T: int
    dt: float
    k_min: np.ndarray
    k_max: np.ndarray
    offset: np.ndarray
    R: np.ndarray
    kd: np.ndarray
    ku: np.ndarray
    kd_local: np.ndarray
    ku_local: np.ndarray
    p_up: np.ndarray
    R_bar: float = math.inf

    @property
    def steps(self) -> int:
        return self.N * self.T

    def count(self, i: int) -> int:
        return int(self.k_max[i] - self.k_min[i] + 1)

    def band(self, i: int) -> slice:
        return slice(int(self.offset[i]), int(self.offset[i]) + self.count(i))

    def node(self, i: int, k: int) -> int:
        if not self.k_min[i] <= k <= self.k_max[i]:
            raise IndexError(f"node ({i},{k}) outside band [{self.k_min[i]}, {self.k_max[i]}]")
        return int(self.offset[i] + k - self.k_min[i])

    def rates(self, i: int) -> np.ndarray:
        return self.R[self.band(i)]

    def up_probability(self, i: int, k: int) -> float:
        return float(self.p_up[self.node(i, k)])

    @classmethod
    def constant(cls, r: float, T: int, N: int) -> "RateLattice":
        """Single-node lattice: a frozen short rate."""
        steps = N * T
        n = steps + 1
        zeros = np.zeros(n, dtype=np.int64)
        return cls(
            N=N, T=T, dt=1.0 / N,
            k_min=zeros.copy(), k_max=zeros.copy(), offset=np.arange(n, dtype=np.int64),
            R=np.full(n, float(r)),
            kd=zeros.copy(), ku=zeros.copy(), kd_local=zeros.copy(), ku_local=zeros.copy(),
            p_up=np.ones(n),
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("i,k,R,kd,ku,p_up\n")
        for i in range(self.steps + 1):
            for k in range(int(self.k_min[i]), int(self.k_max[i]) + 1):
                p = self.node(i, k)
                buf.write(f"{i},{k},{self.R[p]:.12g},{self.kd[p]},{self.ku[p]},{self.p_up[p]:.12g}\n")
        return buf.getvalue()


class CIRTree:
    """Node geometry of the CIR tree, independent of the stored band.

    ``sqrt(R_{i,k}) = max(sqrt(r0) + (2k - i) * h, 0)`` with half-step
    ``h = sigma_r * sqrt(dt) / 2``, so that one-step variance of the tree
    matches ``sigma_r**2 * R * dt``.
    """

    def __init__(self, market: MarketParams, N: int, half_step: bool = True):
        if not (market.sigma_r > 0 and market.k_r > 0 and market.theta > 0):
            raise ValueError("CIR lattice needs positive sigma_r, k_r and theta")
        if market.r0 < 0:
            raise ValueError("initial rate must be non-negative")
        self.m = market
        self.N = int(N)
        self.dt = 1.0 / self.N
        self.h = market.sigma_r * math.sqrt(self.dt) * (0.5 if half_step else 1.0)
        self.sqrt_r0 = math.sqrt(market.r0)

    def value(self, i, k):
        x = self.sqrt_r0 + (2 * np.asarray(k) - i) * self.h
        return np.maximum(x, 0.0) ** 2

    def k_floor(self, i: int) -> int:
        """Index of the single retained zero node (or 0)."""
        return max(0, math.floor(i / 2 - self.sqrt_r0 / (2 * self.h)))

    def k_bar(self, i: int) -> int:
        """Highest index whose successors cannot climb above it."""
        dt, kr, s, th = self.dt, self.m.k_r, self.m.sigma_r, self.m.theta
        disc = dt * dt * s * s * (dt * kr * (4 * th * kr - s * s) + s * s)
        if disc < 0:
            return i
        num = (-2 * dt ** 1.5 * kr * self.sqrt_r0 * s + math.sqrt(disc)
               + dt * dt * i * kr * s * s + dt * s * s)
        return math.ceil(num / (2 * dt * dt * kr * s * s))

    def R_bar(self) -> float:
        dt, kr, s, th = self.dt, self.m.k_r, self.m.sigma_r, self.m.theta
        disc = dt * dt * s * s * (dt * kr * (4 * th * kr - s * s) + s * s)
        if disc < 0:
            return math.inf
        return ((math.sqrt(disc) + 4 * dt * dt * kr * s * s + dt * s * s) ** 2
                / (4 * dt ** 3 * kr * kr * s * s))

    def successors(self, i: int, k: np.ndarray):
        """Down/up successor indices and up-probabilities for nodes ``k`` at step ``i``."""
        k = np.asarray(k, dtype=np.int64)
        R = self.value(i, k)
        drift = self.m.k_r * (self.m.theta - R)
        target = R + drift * self.dt
        nxt = i + 1
        # candidate from the sqrt grid, then repair against actual node values
        pos = (np.sqrt(np.maximum(target, 0.0)) - self.sqrt_r0) / (2 * self.h) + nxt / 2
        kd = np.clip(np.floor(pos).astype(np.int64), 0, k)
        for _ in range(2):
            too_high = (kd > 0) & (self.value(nxt, kd) > target)
            kd = np.where(too_high, kd - 1, kd)
            bump = (kd + 1 <= k) & (self.value(nxt, kd + 1) <= target)
            kd = np.where(bump, kd + 1, kd)
        ku = np.clip(np.ceil(pos).astype(np.int64), k + 1, nxt)
        for _ in range(2):
            too_low = (ku < nxt) & (self.value(nxt, ku) < target)
            ku = np.where(too_low, ku + 1, ku)
            drop = (ku - 1 >= k + 1) & (self.value(nxt, ku - 1) >= target)
            ku = np.where(drop, ku - 1, ku)
        kd = np.maximum(kd, self.k_floor(nxt))
        ku = np.where(R < self.m.theta, ku, kd + 1)
        Rd = self.value(nxt, kd)
        Ru = self.value(nxt, ku)
        den = Ru - Rd
        with np.errstate(divide="ignore", invalid="ignore"):
            p = (drift * self.dt + R - Rd) / den
        # equal successors only happen on the zero floor: push toward the larger index
        p = np.where(den > 0, np.clip(p, 0.0, 1.0), 1.0)
        return kd, ku, p, R


def build(market: MarketParams, T: int, N: int, half_step: bool = True) -> RateLattice:
    """Build the banded CIR lattice over ``T`` years with ``N`` steps per year."""
    if N < 1 or T < 1:
        raise ValueError("need N >= 1 and T >= 1")
    tree = CIRTree(market, N, half_step=half_step)
    steps = N * T
    k_min = np.empty(steps + 1, dtype=np.int64)
    k_max = np.empty(steps + 1, dtype=np.int64)
    k_min[0] = k_max[0] = 0
    kbar_prev = tree.k_bar(0)
    for i in range(1, steps + 1):
        k_min[i] = tree.k_floor(i)
        kbar = tree.k_bar(i)
        _, ku_bar, _, _ = tree.successors(i - 1, np.array([max(kbar_prev, k_min[i - 1])]))
        k_max[i] = max(k_min[i], min(kbar, i, int(ku_bar[0])))
        kbar_prev = kbar
    counts = k_max - k_min + 1
    offset = np.zeros(steps + 1, dtype=np.int64)
    offset[1:] = np.cumsum(counts[:-1])
    total = int(counts.sum())
    R = np.empty(total)
    kd = np.zeros(total, dtype=np.int64)
    ku = np.zeros(total, dtype=np.int64)
    p = np.ones(total)
    for i in range(steps + 1):
        ks = np.arange(k_min[i], k_max[i] + 1)
        sl = slice(offset[i], offset[i] + counts[i])
        if i < steps:
            kd[sl], ku[sl], p[sl], R[sl] = tree.successors(i, ks)
        else:
            R[sl] = tree.value(i, ks)
    lat = RateLattice(
        N=N, T=T, dt=tree.dt, k_min=k_min, k_max=k_max, offset=offset, R=R,
        kd=kd, ku=ku, kd_local=np.zeros(total, dtype=np.int64),
        ku_local=np.zeros(total, dtype=np.int64), p_up=p, R_bar=tree.R_bar(),
    )
    _localize(lat)
    return lat


def _localize(lat: RateLattice) -> None:
    for i in range(lat.steps):
        sl = lat.band(i)
        lat.kd_local[sl] = lat.kd[sl] - lat.k_min[i + 1]
        lat.ku_local[sl] = lat.ku[sl] - lat.k_min[i + 1]


def reachability_check(lat: RateLattice) -> bool:
    """True iff every stored node's successors land inside the next step's band."""
    for i in range(lat.steps):
        sl = lat.band(i)
        lo, hi = lat.k_min[i + 1], lat.k_max[i + 1]
        if np.any(lat.kd[sl] < lo) or np.any(lat.ku[sl] > hi) or np.any(lat.kd[sl] > hi):
            return False
    return True
