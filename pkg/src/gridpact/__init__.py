"""Bilevel contracting games between an electrolyzer owner and a grid operator."""
from .core import (CONTRACTS, BudgetMode, BudgetPolicy, ContractKind, ElectrolyzerTech,
                   NetworkSeries, PriceSet, ScenarioData, ScenarioError, TariffSchedule,
                   annualize_capital, capital_recovery_factor, efficiency_to_yield,
                   hydrogen_yield, validate_scenario)

__version__ = "0.1.0"

__all__ = [
    "CONTRACTS", "BudgetMode", "BudgetPolicy", "ContractKind", "ElectrolyzerTech",
    "NetworkSeries", "PriceSet", "ScenarioData", "ScenarioError", "TariffSchedule",
    "annualize_capital", "capital_recovery_factor", "efficiency_to_yield", "hydrogen_yield",
    "validate_scenario", "__version__",
]
