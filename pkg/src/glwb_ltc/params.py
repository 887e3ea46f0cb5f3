"""Contract and market parameter sets."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

BS = "bs-constant-rate"
BS_CIR = "bs-cir"
MODES = (BS, BS_CIR)


class ConfigError(ValueError):
    """Invalid parameter value; ``field`` names the offending setting."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


def default_withdrawal_rate(x0: int) -> float:
    return 0.03 + (x0 - 60) * 0.001


def default_penalty(n: int) -> float:
    return 0.01 * max(0, 8 - n)


@dataclass(frozen=True)
class ContractParams:
    """Contract-level terms of a GLWB-LTC policy.

    ``g`` and ``b`` default to the age-indexed convention (``g = 3% + 0.1%``
    per year of age above 60, ``b = g + 0.5%``) when left as ``None``; the
    penalty schedule defaults to ``1% * max(0, 8 - n)``.
    """

    P: float = 100.0
    alpha: float = 0.0
    beta: float = 0.003
    x0: int = 60
    g: Optional[float] = None
    c: float = 0.06
    pi: float = 0.05
    b: Optional[float] = None
    initial_health: int = 1
    penalty: Optional[Callable[[int], float]] = field(default=None, compare=False)
    indexed_death_benefit: bool = True

    auto_g: bool = field(default=False, init=False, repr=False, compare=False)
    auto_b: bool = field(default=False, init=False, repr=False, compare=False)

    def __post_init__(self):
        # remember which rates follow the age convention so re-aged copies re-derive them
        if self.g is None:
            object.__setattr__(self, "g", default_withdrawal_rate(self.x0))
            object.__setattr__(self, "auto_g", True)
        if self.b is None:
            object.__setattr__(self, "b", self.g + 0.005)
            object.__setattr__(self, "auto_b", True)
        self.validate()

    def validate(self) -> None:
        if not self.P > 0:
            raise ConfigError("contract.P", "premium must be positive")
        for name in ("alpha", "beta", "g", "c", "pi", "b"):
            if getattr(self, name) < 0:
                raise ConfigError(f"contract.{name}", "must be non-negative")
        if int(self.x0) != self.x0 or not 60 <= self.x0 <= 121:
            raise ConfigError("contract.x0", "entry age must be an integer in [60, 121]")
        if self.initial_health not in range(1, 7):
            raise ConfigError("contract.initial_health", "must be a living state 1..6")

    @property
    def horizon(self) -> int:
        """Maximum contract duration in years (age 122 cap)."""
        return 122 - int(self.x0)

    def kappa(self, n: int) -> float:
        if self.penalty is None:
            return default_penalty(n)
        return float(self.penalty(n))

    def evolve(self, **changes) -> "ContractParams":
        """Copy with ``changes`` applied; age-derived ``g``/``b`` are recomputed unless overridden."""
        if self.auto_g and "g" not in changes:
            changes["g"] = None
        if self.auto_b and "b" not in changes:
            changes["b"] = None
        return replace(self, **changes)

    def with_alpha(self, alpha: float) -> "ContractParams":
        return self.evolve(alpha=alpha)


@dataclass(frozen=True)
class MarketParams:
    """Fund and short-rate dynamics.

    In ``bs-constant-rate`` mode the short rate is frozen at ``r0`` and the
    CIR parameters are ignored.
    """

    sigma_F: float = 0.20
    sigma_r: float = 0.10
    k_r: float = 0.5
    theta: float = 0.05
    r0: float = 0.05
    rho: float = -0.25
    mode: str = BS_CIR

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigError("market.mode", f"must be one of {MODES}")
        if not self.sigma_F > 0:
            raise ConfigError("market.sigma_F", "fund volatility must be positive")
        if not -1.0 <= self.rho <= 1.0:
            raise ConfigError("market.rho", "correlation must lie in [-1, 1]")
        if self.r0 < 0:
            raise ConfigError("market.r0", "initial rate must be non-negative")
        if self.mode == BS_CIR:
            for name in ("sigma_r", "k_r", "theta"):
                if not getattr(self, name) > 0:
                    raise ConfigError(f"market.{name}", "must be positive in bs-cir mode")

    @property
    def is_cir(self) -> bool:
        return self.mode == BS_CIR
