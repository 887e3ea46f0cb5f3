"""Valuation of GLWB variable annuities with a long-term-care rider.

A lattice pricer does the valuation; an independent Monte Carlo pricer
cross-checks the static case.
"""

from .params import BS, BS_CIR, ConfigError, ContractParams, MarketParams
from .pricer import FairFee, PricingResult, Strategy, TreePricer, fair_fee, optimal_action_map, sweep

__all__ = [
    "BS", "BS_CIR", "ConfigError", "ContractParams", "MarketParams",
    "FairFee", "PricingResult", "Strategy", "TreePricer", "fair_fee", "optimal_action_map", "sweep",
]
__version__ = "0.1.0"
