"""Anniversary cash-flow rules of the GLWB-LTC contract.

All amounts are expressed with the benefit base pinned at the premium ``P``
(the value is homogeneous of degree one in account and benefit base).
"""

from __future__ import annotations

from dataclasses import dataclass

from .health import LTC_STATES
from .params import ContractParams


@dataclass(frozen=True)
class AnniversaryOutcome:
    A_after: float
    B_factor: float
    W: float
    Y: float
    lapsed: bool


def fee_step(A_minus: float, params: ContractParams) -> float:
    if A_minus < 0:
        raise ValueError("account value must be non-negative")
    return max(A_minus - params.alpha * A_minus - params.beta * params.P, 0.0)


def ltc_payment(n: int, h: int, params: ContractParams) -> float:
    if n < 1:
        raise ValueError("no LTC benefit is paid before the first anniversary")
    if h in LTC_STATES:
        return params.c * params.P * (1.0 + params.pi) ** n
    return 0.0


def guaranteed_amount(n: int, params: ContractParams) -> float:
    if n < 1:
        raise ValueError("withdrawals start at the first anniversary")
    return params.g * (1.0 + params.pi) ** n * params.P


def death_benefit(A_minus: float, G_tau: float) -> float:
    return max(A_minus, G_tau)


def apply_withdrawal(gamma: float, A2: float, G: float, kappa_n: float, b: float) -> AnniversaryOutcome:
    """Outcome of withdrawal control ``gamma`` in [0, 2] on account ``A2``.

    Up to ``gamma = 1`` the holder takes a fraction of ``G`` (nothing at all
    earns the bonus ``b``). Above 1 the withdrawal moves toward full
    surrender and the excess over ``G`` is charged the penalty ``kappa_n``.
    """
    if not 0.0 <= gamma <= 2.0:
        raise ValueError(f"gamma={gamma} outside [0, 2]")
    if A2 < 0 or G < 0:
        raise ValueError("account and guaranteed amount must be non-negative")
    if gamma == 0.0:
        return AnniversaryOutcome(A2, 1.0 + b, 0.0, 0.0, False)
    if gamma <= 1.0:
        W = gamma * G
        return AnniversaryOutcome(max(A2 - W, 0.0), 1.0, W, W, False)
    W = (2.0 - gamma) * G + (gamma - 1.0) * A2
    Y = G + (W - G) * (1.0 - kappa_n)
    lapsed = gamma == 2.0
    A_after = 0.0 if lapsed else max(A2 - W, 0.0)
    return AnniversaryOutcome(A_after, 2.0 - gamma, W, Y, lapsed)
