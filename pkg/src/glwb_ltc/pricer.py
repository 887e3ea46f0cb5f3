"""Backward-induction tree pricer for GLWB-LTC contracts.

Values are stored as ``V[h, q, j]`` (health state, rate slot, account
node). A policy year is rolled back by mixing over next-year health, taking
``N`` discounted sub-steps on the joint lattice, then undoing the
anniversary cash flows in reverse order.
"""

from __future__ import annotations

import io
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from . import rates
from ._kernels import backward_year, check_finite
from .grid import AccountGrid
from .health import DEAD, HealthModel, LTC_STATES, N_STATES
from .joint import decoupling_threshold, tabulate
from .params import ContractParams, MarketParams

log = logging.getLogger(__name__)

STATIC = "static"
MIXED = "mixed"
DYNAMIC = "dynamic"
FULL_DYNAMIC = "full-dynamic"
KINDS = (STATIC, MIXED, DYNAMIC, FULL_DYNAMIC)
BANG_BANG = (0.0, 1.0, 2.0)

LIVING = N_STATES - 1


@dataclass(frozen=True)
class Strategy:
    kind: str = STATIC
    gamma_mesh: Tuple[float, ...] = BANG_BANG

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown strategy {self.kind!r}; expected one of {KINDS}")
        mesh = tuple(sorted({float(g) for g in self.gamma_mesh}))
        if any(not 0.0 <= g <= 2.0 for g in mesh):
            raise ValueError("gamma mesh values must lie in [0, 2]")
        if self.kind in (DYNAMIC, FULL_DYNAMIC) and not set(BANG_BANG) <= set(mesh):
            raise ValueError("dynamic gamma mesh must contain 0, 1 and 2")
        object.__setattr__(self, "gamma_mesh", mesh)

    @classmethod
    def uniform(cls, kind: str, points: int) -> "Strategy":
        return cls(kind, tuple(np.linspace(0.0, 2.0, points)))

    @property
    def candidates(self) -> Tuple[float, ...]:
        if self.kind == STATIC:
            return (1.0,)
        if self.kind == MIXED:
            return (1.0, 2.0)
        return self.gamma_mesh

    @property
    def surrenders_intra_year(self) -> bool:
        return self.kind == FULL_DYNAMIC


@dataclass
class ActionMap:
    n: int
    h: int
    A: np.ndarray
    r: np.ndarray
    k: np.ndarray
    gamma: np.ndarray  # (rate node, account node)

    def rows(self):
        for q, (k, r) in enumerate(zip(self.k, self.r)):
            for j, a in enumerate(self.A):
                yield self.n, self.h, j, int(k), a, r, self.gamma[q, j]


def action_maps_csv(maps: Iterable[ActionMap]) -> str:
    buf = io.StringIO()
    buf.write("n,h,j,k,A,r,gamma\n")
    for m in maps:
        for n, h, j, k, a, r, g in m.rows():
            buf.write(f"{n},{h},{j},{k},{a:.10g},{r:.10g},{g:g}\n")
    return buf.getvalue()


@dataclass
class PricingResult:
    price_at_inception: float
    alpha: float
    strategy: str
    action_maps: Dict[Tuple[int, int], ActionMap] = field(default_factory=dict)
    fair_alpha: Optional[float] = None
    diagnostics: Dict[str, float] = field(default_factory=dict)


class NumericalFailure(FloatingPointError):
    pass


class InfeasibleFeeError(ValueError):
    """Even with no account fee the contract is worth less than the premium."""


def _interp(V: np.ndarray, grid: AccountGrid, query: np.ndarray) -> np.ndarray:
    idx, w, _ = grid.locate(query)
    return V[..., idx] * (1.0 - w) + V[..., idx + 1] * w


class TreePricer:
    """Prices one contract on one (N, f_A) setup.

    The lattices and probability tables are built once and reused across
    calls, so probing different fees is cheap.
    """

    def __init__(self, contract: ContractParams, market: MarketParams, N: int, f_A: float,
                 health: Optional[HealthModel] = None, strict: bool = False,
                 matrices: Optional[Sequence[np.ndarray]] = None):
        t0 = time.perf_counter()
        self.contract = contract
        self.market = market
        self.N = int(N)
        self.f_A = float(f_A)
        self.T = contract.horizon
        dt = 1.0 / self.N
        self.grid = AccountGrid.build(contract.P, market.sigma_F, dt, f_A)
        if market.is_cir:
            self.lattice = rates.build(market, self.T, self.N)
            self._rho_sig = market.rho * market.sigma_r * market.sigma_F
            self._theta_lo = decoupling_threshold(market) * math.sqrt(dt)
        else:
            self.lattice = rates.RateLattice.constant(market.r0, self.T, self.N)
            self._rho_sig, self._theta_lo = 0.0, math.inf
        self.table = tabulate(self.lattice, self.grid, market, strict=strict)
        if matrices is None:
            matrices = (health or HealthModel()).transition_sequence(contract.x0)
        if len(matrices) != self.T:
            raise ValueError(f"expected {self.T} annual matrices, got {len(matrices)}")
        self.matrices = [np.asarray(m, dtype=float) for m in matrices]
        counts = self.lattice.k_max - self.lattice.k_min + 1
        self._width = int(counts.max())
        self.setup_seconds = time.perf_counter() - t0

    def guaranteed(self, n: int) -> float:
        c = self.contract
        return c.g * (1.0 + c.pi) ** n * c.P

    def _death_values(self, n: int) -> np.ndarray:
        c = self.contract
        G = self.guaranteed(n) if c.indexed_death_benefit else c.g * c.P
        return np.maximum(self.grid.values, G)

    def _withdraw(self, V3, n, strategy, record):
        c = self.contract
        A = self.grid.values
        G = self.guaranteed(n)
        kappa = c.kappa(n)
        best = arg = None
        for gamma in strategy.candidates:
            if gamma == 0.0:
                val = (1.0 + c.b) * _interp(V3, self.grid, A / (1.0 + c.b))
            elif gamma <= 1.0:
                val = _interp(V3, self.grid, np.maximum(A - gamma * G, 0.0)) + gamma * G
            elif gamma < 2.0:
                W = (2.0 - gamma) * G + (gamma - 1.0) * A
                Y = G + (W - G) * (1.0 - kappa)
                val = (2.0 - gamma) * _interp(V3, self.grid, np.maximum(A - W, 0.0) / (2.0 - gamma)) + Y
            else:
                val = np.broadcast_to(G + (A - G) * (1.0 - kappa), V3.shape)
            if best is None:
                best = np.array(val, copy=True)
                arg = np.full(V3.shape, gamma) if record else None
            else:
                better = val > best
                best = np.where(better, val, best)
                if record:
                    arg = np.where(better, gamma, arg)
        return best, arg

    def _ltc(self, V2, n):
        c = self.contract
        L = c.c * c.P * (1.0 + c.pi) ** n
        if L == 0.0:
            return V2
        V1 = V2.copy()
        rows = [h - 1 for h in LTC_STATES]
        V1[rows] = _interp(V2[rows], self.grid, np.maximum(self.grid.values - L, 0.0)) + L
        return V1

    def _fees(self, V1, alpha):
        c = self.contract
        return _interp(V1, self.grid, np.maximum(self.grid.values * (1.0 - alpha) - c.beta * c.P, 0.0))

    def price(self, strategy: Strategy = Strategy(), alpha: Optional[float] = None,
              maps: Iterable[Tuple[int, int]] = ()) -> PricingResult:
        """Value at inception for account ``P``, the root rate and the initial health state.

        ``maps`` lists ``(n, h)`` pairs whose optimal withdrawal choice should
        be recorded.
        """
        t0 = time.perf_counter()
        c = self.contract
        alpha = c.alpha if alpha is None else float(alpha)
        if alpha < 0:
            raise ValueError("fee rate must be non-negative")
        wanted = {(int(n), int(h)) for n, h in maps}
        lat, tab, grid = self.lattice, self.table, self.grid
        N, T = self.N, self.T
        J = len(grid)
        bufs = [np.empty((LIVING, self._width, J)) for _ in range(3)]
        nq = lat.count(T * N)
        V = bufs[0]
        V[:, :nq] = self._death_values(T)
        recorded: Dict[Tuple[int, int], ActionMap] = {}
        for n in range(T - 1, -1, -1):
            Pm = self.matrices[n]
            nq1 = lat.count((n + 1) * N)
            mix = bufs[1]
            mix[:, :nq1] = np.tensordot(Pm[:LIVING, :LIVING], V[:, :nq1], axes=(1, 0))
            mix[:, :nq1] += Pm[:LIVING, DEAD - 1, None, None] * self._death_values(n + 1)
            surrender = 1.0 - c.kappa(n) if strategy.surrenders_intra_year else -1.0
            res = backward_year(mix, (n + 1) * N, N, lat.offset, lat.k_min, lat.k_max, lat.R,
                                lat.kd, lat.ku, lat.p_up, tab.jump, tab.probs, grid.values,
                                grid.step, lat.dt, self._rho_sig, self._theta_lo, surrender, bufs[2])
            nq0 = lat.count(n * N)
            V3 = res[:, :nq0]
            if n >= 1:
                record = any(m == n for m, _ in wanted)
                V2, arg = self._withdraw(V3, n, strategy, record)
                for (m, h) in wanted:
                    if m == n:
                        recorded[(m, h)] = ActionMap(
                            n, h, grid.values.copy(), lat.rates(n * N).copy(),
                            np.arange(lat.k_min[n * N], lat.k_max[n * N] + 1), arg[h - 1].copy())
                V1 = self._ltc(V2, n)
            else:
                V1 = V3
            Vm = self._fees(V1, alpha)
            try:
                check_finite(Vm, n)
            except FloatingPointError as exc:
                raise NumericalFailure(str(exc)) from None
            # bufs[0] held year n+1, which is no longer needed
            V[:, :nq0] = Vm
        price = float(V[c.initial_health - 1, 0, grid.j_min])
        diag = {
            "seconds": time.perf_counter() - t0,
            "setup_seconds": self.setup_seconds,
            "steps": N * T,
            "rate_nodes": int(lat.R.size),
            "account_nodes": J,
            "projected_nodes": self.table.projected,
        }
        missing = wanted - set(recorded)
        if missing:
            raise ValueError(f"no withdrawal decision at {sorted(missing)} (anniversaries start at 1)")
        return PricingResult(price, alpha, strategy.kind, recorded, None, diag)


@dataclass
class FairFee:
    alpha: float
    price: float
    iterations: int
    coarse_alpha: Optional[float]
    seconds: float

    @property
    def bps(self) -> float:
        return self.alpha * 1e4


def _secant(f, x0, x1, f0=None, f1=None, tol=1e-7, max_iter=50):
    f0 = f(x0) if f0 is None else f0
    f1 = f(x1) if f1 is None else f1
    for it in range(1, max_iter + 1):
        if f1 == f0:
            raise ArithmeticError("secant stalled: equal function values")
        x2 = x1 - f1 * (x1 - x0) / (f1 - f0)
        if abs(x2 - x1) < tol:
            return x2, it, (f1 - f0) / (x1 - x0)
        x0, f0 = x1, f1
        x1, f1 = x2, f(x2)
    raise ArithmeticError(f"secant did not converge in {max_iter} iterations")


def coarse_setup(market: MarketParams) -> Tuple[int, float]:
    return (25, 100.0) if market.is_cir else (100, 100.0)


def fair_fee(contract: ContractParams, market: MarketParams, strategy: Strategy = Strategy(),
             N: int = 100, f_A: float = 100.0, tol_bps: float = 1e-3, max_iter: int = 50,
             two_stage: bool = True, health: Optional[HealthModel] = None) -> FairFee:
    """Account fee rate ``alpha`` making the inception value equal the premium.

    With ``two_stage`` the secant runs first on a coarse setup, whose root and
    slope seed the run on the requested setup.
    """
    t0 = time.perf_counter()
    tol = tol_bps * 1e-4
    P = contract.P
    coarse = coarse_setup(market)
    coarse_alpha = None
    x0, x1 = 0.0, 0.01

    def objective(pricer):
        return lambda a: pricer.price(strategy, alpha=a).price_at_inception - P

    iters = 0
    if two_stage and (N, f_A) != coarse and N >= coarse[0]:
        cp = TreePricer(contract, market, *coarse, health=health)
        f = objective(cp)
        f0 = f(0.0)
        if f0 < 0:
            raise InfeasibleFeeError(f"contract worth {f0 + P:.4f} < premium {P} with zero fee")
        coarse_alpha, it, slope = _secant(f, x0, x1, f0=f0, tol=tol, max_iter=max_iter)
        iters += it
        fp = TreePricer(contract, market, N, f_A, health=health)
        f = objective(fp)
        fa = f(coarse_alpha)
        # Newton step with the coarse slope, then secant on the fine setup
        x1 = coarse_alpha - fa / slope
        alpha, it, _ = _secant(f, coarse_alpha, x1, f0=fa, tol=tol, max_iter=max_iter)
    else:
        fp = TreePricer(contract, market, N, f_A, health=health)
        f = objective(fp)
        f0 = f(0.0)
        if f0 < 0:
            raise InfeasibleFeeError(f"contract worth {f0 + P:.4f} < premium {P} with zero fee")
        alpha, it, _ = _secant(f, x0, x1, f0=f0, tol=tol, max_iter=max_iter)
    iters += it
    return FairFee(alpha, P, iters, coarse_alpha, time.perf_counter() - t0)


def optimal_action_map(contract: ContractParams, market: MarketParams, anniversaries: Sequence[int],
                       healths: Sequence[int], strategy: Strategy = Strategy(DYNAMIC),
                       N: int = 100, f_A: float = 100.0) -> List[ActionMap]:
    if strategy.kind not in (DYNAMIC, FULL_DYNAMIC):
        raise ValueError("action maps need a dynamic or full-dynamic strategy")
    pairs = [(n, h) for n in anniversaries for h in healths]
    res = TreePricer(contract, market, N, f_A).price(strategy, maps=pairs)
    return [res.action_maps[p] for p in pairs]


SWEEP_AXES = ("entry-age", "sigma_r", "sigma_F", "rho", "c")


def apply_axis(contract: ContractParams, market: MarketParams, axis: str, value):
    from dataclasses import replace
    if axis == "entry-age":
        return contract.evolve(x0=int(value)), market
    if axis == "c":
        return contract.evolve(c=float(value)), market
    if axis in ("sigma_r", "sigma_F", "rho"):
        return contract, replace(market, **{axis: float(value)})
    raise ValueError(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")


def sweep(axis: str, values: Sequence[float], contract: ContractParams, market: MarketParams,
          strategy: Strategy = Strategy(), N: int = 100, f_A: float = 100.0,
          quantity: str = "fair_alpha_bps", **kw) -> List[dict]:
    """One row per axis value; failures are reported in the ``error`` column."""
    if axis not in SWEEP_AXES:
        raise ValueError(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")
    if quantity not in ("fair_alpha_bps", "price"):
        raise ValueError("quantity must be fair_alpha_bps or price")
    rows = []
    for v in values:
        row = {axis: v, quantity: float("nan"), "seconds": 0.0, "error": ""}
        t0 = time.perf_counter()
        try:
            c, m = apply_axis(contract, market, axis, v)
            if quantity == "price":
                row[quantity] = TreePricer(c, m, N, f_A).price(strategy).price_at_inception
            else:
                row[quantity] = fair_fee(c, m, strategy, N, f_A, **kw).bps
        except Exception as exc:  # one bad point must not stop the sweep
            log.warning("sweep %s=%s failed: %s", axis, v, exc)
            row["error"] = f"{type(exc).__name__}: {exc}"
        row["seconds"] = time.perf_counter() - t0
        rows.append(row)
    return rows
