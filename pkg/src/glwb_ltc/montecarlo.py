"""Monte Carlo pricing of the static-withdrawal contract.

Scenario paths are simulated once and then revalued for any fee rate, which gives common random numbers
across fee probes for free. Under the constant-rate model four control
variates with exactly computable means reduce the variance.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numba
import numpy as np

from .health import DEAD, HealthModel, LTC_STATES, N_STATES
from .params import ContractParams, MarketParams
from .pricer import InfeasibleFeeError

log = logging.getLogger(__name__)

BATCH = 50_000
Z95 = 1.96


@dataclass
class McEstimate:
    mean: float
    half_width: float
    n_paths: int
    steps_per_year: int
    seed: int
    wall_seconds: float
    plain: Optional["McEstimate"] = field(default=None, repr=False)

    CSV_HEADER = "config_id,mean,half_width,n_paths,steps_per_year,seed,seconds"

    def csv_row(self, config_id: str) -> str:
        return (f"{config_id},{self.mean:.10g},{self.half_width:.10g},{self.n_paths},"
                f"{self.steps_per_year},{self.seed},{self.wall_seconds:.3f}")

    def contains(self, value: float) -> bool:
        return abs(value - self.mean) <= self.half_width


@dataclass
class Scenarios:
    """Simulated drivers for ``n`` paths over ``T`` years.

    ``health[:, m]`` is the state at anniversary ``m``; ``growth[:, m-1]`` the
    fund ratio ``F_m / F_{m-1}``; ``discount[:, m-1]`` the factor from 0 to
    ``m`` (a single shared row under a constant rate).
    """

    health: np.ndarray
    growth: np.ndarray
    discount: np.ndarray
    steps_per_year: int
    seed: int
    seconds: float

    @property
    def n_paths(self) -> int:
        return self.health.shape[0]


def _rng(seed: int, batch: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(batch)])))


@numba.njit(cache=True)
def _health_paths(u, cum, start, out):
    n, T = u.shape
    for p in range(n):
        s = start
        out[p, 0] = s
        for m in range(T):
            if s != 7:
                row = cum[m, s - 1]
                x = u[p, m]
                nxt = 7
                for h in range(7):
                    if x < row[h]:
                        nxt = h + 1
                        break
                s = nxt
            out[p, m + 1] = s


@numba.njit(cache=True)
def _cir_year(r, z, dt, k, theta, sigma):
    """Full-truncation Euler over one year; returns trapezoid integral and summed shocks."""
    n, S = z.shape
    integ = np.zeros(n)
    zsum = np.zeros(n)
    sq = math.sqrt(dt)
    for p in range(n):
        x = r[p]
        acc = 0.0
        zs = 0.0
        for s in range(S):
            xp = x if x > 0.0 else 0.0
            x_new = x + k * (theta - xp) * dt + sigma * math.sqrt(xp) * sq * z[p, s]
            xn = x_new if x_new > 0.0 else 0.0
            acc += 0.5 * (xp + xn) * dt
            zs += z[p, s]
            x = x_new
        r[p] = x
        integ[p] = acc
        zsum[p] = zs * sq
    return integ, zsum


def _cumulative(matrices):
    cum = np.cumsum(np.asarray(matrices), axis=2)
    cum[:, :, -1] = 1.0 + 1e-12  # guard against round-off at the top of each row
    return cum


def simulate(contract: ContractParams, market: MarketParams, n_paths: int, steps_per_year: int = 1,
             seed: int = 0, matrices: Optional[Sequence[np.ndarray]] = None) -> Scenarios:
    t0 = time.perf_counter()
    if n_paths < 2:
        raise ValueError("need at least two paths")
    T = contract.horizon
    if matrices is None:
        matrices = HealthModel().transition_sequence(contract.x0)
    cum = _cumulative(matrices)
    health = np.empty((n_paths, T + 1), dtype=np.int8)
    growth = np.empty((n_paths, T), dtype=np.float32)
    sF = market.sigma_F
    if market.is_cir:
        discount = np.empty((n_paths, T), dtype=np.float32)
        S = int(steps_per_year)
        dt = 1.0 / S
        rho_c = math.sqrt(1.0 - market.rho ** 2)
    else:
        r = market.r0
        discount = np.exp(-r * np.arange(1, T + 1))[None, :]
    for b, lo in enumerate(range(0, n_paths, BATCH)):
        hi = min(lo + BATCH, n_paths)
        n = hi - lo
        rng = _rng(seed, b)
        _health_paths(rng.random((n, T)), cum, contract.initial_health, health[lo:hi])
        if market.is_cir:
            rate = np.full(n, market.r0)
            log_disc = np.zeros(n)
            for m in range(T):
                integ, wr = _cir_year(rate, rng.standard_normal((n, S)), dt,
                                      market.k_r, market.theta, market.sigma_r)
                wf = market.rho * wr + rho_c * rng.standard_normal(n)
                growth[lo:hi, m] = np.exp(integ - 0.5 * sF * sF + sF * wf)
                log_disc -= integ
                discount[lo:hi, m] = np.exp(log_disc)
        else:
            z = rng.standard_normal((n, T))
            growth[lo:hi] = np.exp(r - 0.5 * sF * sF + sF * z)
    return Scenarios(health, growth, discount, int(steps_per_year) if market.is_cir else 1,
                     int(seed), time.perf_counter() - t0)


@numba.njit(cache=True)
def _evaluate(health, growth, discount, P, alpha, beta_P, G, L, ltc, death_G):
    """Per-path discounted cash flows and raw control variables.

    ``G[m]``, ``L[m]`` are indexed by anniversary; ``ltc[h]`` flags LTC states.
    Returns payoff, discounted unfloored account at death, F at death, summed
    guaranteed and LTC amounts, and the death anniversary.
    """
    n, T = growth.shape
    shared = discount.shape[0] == 1
    X = np.empty(n)
    C1 = np.empty(n)
    C2 = np.empty(n)
    C3 = np.empty(n)
    tau = np.empty(n)
    for p in range(n):
        row = 0 if shared else p
        A = max(P * (1.0 - alpha) - beta_P, 0.0)
        Ax = P * (1.0 - alpha) - beta_P  # unfloored twin for the account control
        F = 1.0
        pv = 0.0
        flows = 0.0
        for m in range(1, T + 1):
            g = growth[p, m - 1]
            d = discount[row, m - 1]
            A *= g
            Ax *= g
            F *= g
            h = health[p, m]
            if h == 7:
                pv += d * max(A, death_G[m])
                C1[p] = d * Ax
                C2[p] = F
                C3[p] = flows + G[m]
                tau[p] = m
                break
            A = max(A * (1.0 - alpha) - beta_P, 0.0)
            Ax = Ax * (1.0 - alpha) - beta_P
            cash = G[m]
            if ltc[h]:
                cash += L[m]
                A = max(A - L[m], 0.0)
                Ax -= L[m]
            A = max(A - G[m], 0.0)
            Ax -= G[m]
            flows += cash
            pv += d * cash
        X[p] = pv
    return X, C1, C2, C3, tau


def _schedules(contract: ContractParams):
    T = contract.horizon
    n = np.arange(T + 1)
    idx = (1.0 + contract.pi) ** n
    G = contract.g * idx * contract.P
    L = contract.c * idx * contract.P
    L[0] = 0.0
    death_G = G.copy() if contract.indexed_death_benefit else np.full(T + 1, contract.g * contract.P)
    ltc = np.zeros(N_STATES + 1, dtype=np.bool_)
    ltc[list(LTC_STATES)] = True
    return G, L, ltc, death_G


def evaluate(sc: Scenarios, contract: ContractParams, alpha: Optional[float] = None):
    alpha = contract.alpha if alpha is None else float(alpha)
    G, L, ltc, death_G = _schedules(contract)
    return _evaluate(sc.health, sc.growth, sc.discount, contract.P, alpha,
                     contract.beta * contract.P, G, L, ltc, death_G)


def _estimate(x: np.ndarray, sc: Scenarios, seconds: float) -> McEstimate:
    n = x.size
    return McEstimate(float(x.mean()), Z95 * float(x.std(ddof=1)) / math.sqrt(n), n,
                      sc.steps_per_year, sc.seed, seconds)


def control_expectations(contract: ContractParams, r: float, matrices, alpha: Optional[float] = None):
    """Exact means of the four raw controls under a constant rate ``r``.

    The account control uses an account without the zero floor, whose
    discounted value follows a linear recursion over health states.
    """
    alpha = contract.alpha if alpha is None else float(alpha)
    T = contract.horizon
    G, L, _, _ = _schedules(contract)
    P, bP = contract.P, contract.beta * contract.P
    dist = np.zeros(N_STATES)
    dist[contract.initial_health - 1] = 1.0
    u = np.zeros(N_STATES)
    u[contract.initial_health - 1] = P * (1.0 - alpha) - bP
    ltc_rows = np.array([h - 1 for h in LTC_STATES])
    e_acc = e_F = e_flows = e_tau = 0.0
    for m in range(1, T + 1):
        M = np.asarray(matrices[m - 1])
        alive = dist.copy()
        alive[DEAD - 1] = 0.0
        p_die = float(alive @ M[:, DEAD - 1])
        e_acc += float(u @ M[:, DEAD - 1])
        e_F += p_die * math.exp(r * m)
        e_tau += p_die * m
        e_flows += G[m] * alive.sum()
        dist = alive @ M
        occ = dist.copy()
        occ[DEAD - 1] = 0.0
        e_flows += L[m] * occ[ltc_rows].sum()
        deduct = (bP + G[m]) * occ
        deduct[ltc_rows] += L[m] * occ[ltc_rows]
        u = (1.0 - alpha) * (u @ M) - math.exp(-r * m) * deduct
        u[DEAD - 1] = 0.0
    return np.array([e_acc, e_F, e_flows, e_tau])


def _cv_adjust(X, C, means):
    """OLS control-variate estimate; returns (mean, residual std) or None if degenerate."""
    D = C - means
    Dc = D - D.mean(axis=0)
    Xc = X - X.mean()
    S = Dc.T @ Dc
    if np.linalg.cond(S) > 1e12:
        return None
    beta = np.linalg.solve(S, Dc.T @ Xc)
    adj = X - D @ beta
    return float(adj.mean()), float(adj.std(ddof=1 + C.shape[1]))


def _price_cv(sc, contract, alpha, matrices, plain_seconds):
    X, C1, C2, C3, tau = evaluate(sc, contract, alpha)
    plain = _estimate(X, sc, plain_seconds)
    means = control_expectations(contract, _constant_rate(sc), matrices, alpha)
    got = _cv_adjust(X, np.column_stack([C1, C2, C3, tau]), means)
    if got is None:
        log.warning("control covariance is singular; falling back to plain Monte Carlo")
        return plain, plain
    mean, sd = got
    est = McEstimate(mean, Z95 * sd / math.sqrt(X.size), X.size, 1, sc.seed, plain_seconds)
    est.plain = plain
    return est, plain


def _constant_rate(sc: Scenarios) -> float:
    return -math.log(float(sc.discount[0, 0]))


def simulate_price_static(contract: ContractParams, market: MarketParams, n_paths: int,
                          steps_per_year: int = 1, seed: int = 0, matrices=None) -> McEstimate:
    t0 = time.perf_counter()
    sc = simulate(contract, market, n_paths, steps_per_year, seed, matrices)
    X = evaluate(sc, contract)[0]
    return _estimate(X, sc, time.perf_counter() - t0)


def simulate_price_static_cv(contract: ContractParams, market: MarketParams, n_paths: int,
                             seed: int = 0, matrices=None) -> McEstimate:
    """Control-variate estimate; ``.plain`` holds the plain estimate on the same paths."""
    if market.is_cir:
        raise ValueError("control variates need closed-form means, available only under a constant rate")
    t0 = time.perf_counter()
    if matrices is None:
        matrices = HealthModel().transition_sequence(contract.x0)
    sc = simulate(contract, market, n_paths, 1, seed, matrices)
    est, _ = _price_cv(sc, contract, contract.alpha, matrices, 0.0)
    est.wall_seconds = time.perf_counter() - t0
    return est


@dataclass
class McFairFee:
    alpha: float
    half_width: float
    price: McEstimate
    iterations: int
    n_paths: int
    steps_per_year: int
    seed: int
    seconds: float

    @property
    def bps(self) -> float:
        return self.alpha * 1e4

    @property
    def half_width_bps(self) -> float:
        return self.half_width * 1e4

    def contains(self, alpha: float) -> bool:
        return abs(alpha - self.alpha) <= self.half_width


def fair_fee_mc(contract: ContractParams, market: MarketParams, n_paths: int, steps_per_year: int = 1,
                seed: int = 0, cv: bool = False, tol_bps: float = 1e-3, max_iter: int = 50,
                matrices=None) -> McFairFee:
    """Secant on the simulated price over fixed scenarios.

    The fee interval is the price half-width divided by the price slope in
    the fee at the root.
    """
    if cv and market.is_cir:
        raise ValueError("control variates need closed-form means, available only under a constant rate")
    t0 = time.perf_counter()
    if matrices is None:
        matrices = HealthModel().transition_sequence(contract.x0)
    sc = simulate(contract, market, n_paths, steps_per_year, seed, matrices)
    P = contract.P

    def estimate(a):
        if cv:
            return _price_cv(sc, contract, a, matrices, 0.0)[0]
        return _estimate(evaluate(sc, contract, a)[0], sc, 0.0)

    tol = tol_bps * 1e-4
    x0, x1 = 0.0, 0.01
    e0 = estimate(x0)
    if e0.mean < P:
        raise InfeasibleFeeError(f"simulated value {e0.mean:.4f} < premium {P} with zero fee")
    f0, e1 = e0.mean - P, estimate(x1)
    f1 = e1.mean - P
    for it in range(1, max_iter + 1):
        slope = (f1 - f0) / (x1 - x0)
        x2 = x1 - f1 / slope
        x0, f0 = x1, f1
        e1 = estimate(x2)
        x1, f1 = x2, e1.mean - P
        if abs(x1 - x0) < tol:
            break
    else:
        raise ArithmeticError(f"secant did not converge in {max_iter} iterations")
    slope = (f1 - f0) / (x1 - x0) if x1 != x0 else slope
    secs = time.perf_counter() - t0
    e1.wall_seconds = secs
    return McFairFee(x1, e1.half_width / abs(slope), e1, it, n_paths, sc.steps_per_year, seed, secs)
