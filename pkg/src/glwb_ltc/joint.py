"""Joint (account, rate) transition probabilities.

Each lattice node ``(A_j, R_{i,k})`` moves to four successors. The four
probabilities reproduce both marginals and match the instantaneous
covariance ``rho * sigma_r * sigma_F * sqrt(R) * A * dt``; close to the zero
rate the two moves are taken independent.

On the log-spaced account grid the probabilities for interior ``j`` depend
only on the rate node, so they are tabulated once per ``(i, k)``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numba
import numpy as np

from .grid import AccountGrid
from .params import MarketParams
from .rates import RateLattice

log = logging.getLogger(__name__)

EPS_NEG = 1e-10

# statuses returned by the scalar solver
OK, PROJECTED = 0, 1


class ProbabilityError(ArithmeticError):
    """The moment-matching system produced a materially negative probability."""

    def __init__(self, message: str, node=None):
        super().__init__(message)
        self.node = node


@dataclass(frozen=True)
class JointTransition:
    p_dd: float
    p_du: float
    p_ud: float
    p_uu: float

    def as_tuple(self):
        return (self.p_dd, self.p_du, self.p_ud, self.p_uu)


@numba.njit(cache=True)
def solve_joint(pA_u, pR_u, dA_d, dA_u, dR_d, dR_u, target, decoupled):
    """Closed-form solution of the 4x4 matching system.

    ``dA_*``/``dR_*`` are successor displacements from the current node,
    ``target`` the right-hand side of the cross-moment equation.
    Returns ``(p_dd, p_du, p_ud, p_uu, status)``; status 1 means the raw
    solution left [0, 1] by more than ``EPS_NEG`` and was projected onto the
    nearest admissible joint law with the same marginals.
    """
    a = 1.0 - pA_u
    r = 1.0 - pR_u
    lo = max(0.0, a + r - 1.0)
    hi = min(a, r)
    status = 0
    den = (dA_u - dA_d) * (dR_u - dR_d)
    if decoupled or den == 0.0:
        p_dd = a * r
    else:
        num = target - dA_d * dR_u * a - dA_u * dR_d * r - dA_u * dR_u * (1.0 - a - r)
        p_dd = num / den
        if p_dd < lo - EPS_NEG or p_dd > hi + EPS_NEG:
            status = 1
    p_dd = min(max(p_dd, lo), hi)
    return p_dd, a - p_dd, r - p_dd, 1.0 - a - r + p_dd, status


def account_up_probability(grid: AccountGrid, j: int, R: float, dt: float) -> float:
    j_d, j_u = grid.successors(j, R, dt)
    a = grid.values
    den = a[j_u] - a[j_d]
    if den <= 0:
        return 1.0
    return min(max((a[j] * (1 + R * dt) - a[j_d]) / den, 0.0), 1.0)


def decoupling_threshold(market: MarketParams) -> float:
    """Rate level ``theta_*`` below which ``theta_* sqrt(dt)`` switches to independent moves."""
    return min(market.theta, market.r0) / 2.0


def joint_probabilities(grid: AccountGrid, lattice: RateLattice, market: MarketParams,
                        j: int, i: int, k: int, strict: bool = True) -> JointTransition:
    if j < 1:
        raise ValueError("use zero_account_transition for the depleted account")
    dt = lattice.dt
    p = lattice.node(i, k)
    R = lattice.R[p]
    j_d, j_u = grid.successors(j, R, dt)
    a = grid.values
    pA = account_up_probability(grid, j, R, dt)
    nxt = lattice.band(i + 1).start - lattice.k_min[i + 1]
    Rd = lattice.R[nxt + lattice.kd[p]]
    Ru = lattice.R[nxt + lattice.ku[p]]
    target = market.rho * market.sigma_r * market.sigma_F * math.sqrt(R) * a[j] * dt
    decoupled = R < decoupling_threshold(market) * math.sqrt(dt)
    *probs, status = solve_joint(pA, lattice.p_up[p], a[j_d] - a[j], a[j_u] - a[j],
                                 Rd - R, Ru - R, target, decoupled)
    if status and strict:
        raise ProbabilityError(f"negative joint probability at node (i={i}, j={j}, k={k})",
                               node=(i, j, k))
    return JointTransition(*probs)


def zero_account_transition(lattice: RateLattice, i: int, k: int):
    """Depleted account: only the rate moves. Returns ``((0, kd, p_d), (0, ku, p_u))``."""
    p = lattice.node(i, k)
    pu = float(lattice.p_up[p])
    return (0, int(lattice.kd[p]), 1.0 - pu), (0, int(lattice.ku[p]), pu)


@dataclass
class JointTable:
    """Per-rate-node interior transition data.

    ``jump[n]`` is the account up-move in grid steps (the down move is always
    one step); ``probs[n]`` holds ``(p_dd, p_du, p_ud, p_uu)``.
    """

    jump: np.ndarray
    probs: np.ndarray
    projected: int


@numba.njit(cache=True)
def _tabulate(R, Rd, Ru, pR, step, dt, rho_sig, theta_lo):
    n = R.size
    jump = np.empty(n, dtype=np.int64)
    probs = np.empty((n, 4))
    projected = 0
    ed = math.exp(-step)
    for q in range(n):
        drifted = 1.0 + R[q] * dt
        m = 1
        # smallest m >= 1 with e^{m step} >= drifted
        while math.exp(m * step) < drifted:
            m += 1
        eu = math.exp(m * step)
        pA = min(max((drifted - ed) / (eu - ed), 0.0), 1.0)
        target = rho_sig * math.sqrt(R[q]) * dt
        p_dd, p_du, p_ud, p_uu, st = solve_joint(
            pA, pR[q], ed - 1.0, eu - 1.0, Rd[q] - R[q], Ru[q] - R[q], target,
            R[q] < theta_lo)
        jump[q] = m
        probs[q, 0] = p_dd
        probs[q, 1] = p_du
        probs[q, 2] = p_ud
        probs[q, 3] = p_uu
        projected += st
    return jump, probs, projected


def tabulate(lattice: RateLattice, grid: AccountGrid, market: MarketParams,
             strict: bool = False) -> JointTable:
    """Interior joint probabilities for every non-terminal rate node.

    Works in units of ``A_j`` (all displacements scale with the account value).
    """
    n_inner = int(lattice.offset[lattice.steps])
    R = lattice.R[:n_inner]
    base = np.repeat(lattice.offset[1:] - lattice.k_min[1:], lattice.k_max[:-1] - lattice.k_min[:-1] + 1)
    Rd = lattice.R[base + lattice.kd[:n_inner]]
    Ru = lattice.R[base + lattice.ku[:n_inner]]
    if market.is_cir:
        rho_sig = market.rho * market.sigma_r * market.sigma_F
        theta_lo = decoupling_threshold(market) * math.sqrt(lattice.dt)
    else:
        rho_sig, theta_lo = 0.0, math.inf
    jump, probs, projected = _tabulate(R, Rd, Ru, lattice.p_up[:n_inner], grid.step,
                                       lattice.dt, rho_sig, theta_lo)
    if projected:
        if strict:
            bad = int(np.argmax(_projected_mask(R, Rd, Ru, lattice, grid, rho_sig, theta_lo)))
            raise ProbabilityError(f"negative joint probability at flat rate node {bad}", node=bad)
        log.info("%d of %d rate nodes needed joint-probability projection", projected, n_inner)
    return JointTable(jump, probs, int(projected))


def _projected_mask(R, Rd, Ru, lattice, grid, rho_sig, theta_lo):
    out = np.zeros(R.size, dtype=bool)
    for q in range(R.size):
        sub = _tabulate(R[q:q + 1], Rd[q:q + 1], Ru[q:q + 1], lattice.p_up[q:q + 1],
                        grid.step, lattice.dt, rho_sig, theta_lo)
        out[q] = sub[2] > 0
    return out
