"""Annealing with interacting particles driven by optimal-transport control."""

from .models import (
    CoolingSchedule,
    Potential,
    builtin_potential,
    builtin_schedule,
    potential_gradient,
    potential_value,
)
from .gibbs import GaussianCurve, GibbsReference1D
from .transport import (
    AnnealWeights,
    TransportPlan,
    anneal_weights,
    barycentric_velocity,
    cost_matrix,
    solve_transport_lp,
    w2_empirical_1d,
)

__version__ = "0.1.0"

__all__ = [
    "AnnealWeights",
    "CoolingSchedule",
    "GaussianCurve",
    "GibbsReference1D",
    "Potential",
    "TransportPlan",
    "anneal_weights",
    "barycentric_velocity",
    "builtin_potential",
    "builtin_schedule",
    "cost_matrix",
    "potential_gradient",
    "potential_value",
    "solve_transport_lp",
    "w2_empirical_1d",
]
