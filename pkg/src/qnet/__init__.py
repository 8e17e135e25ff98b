"""Entanglement distribution over free-space optical links.

Models the per-link transmission statistics of an FSO quantum downlink
(atmospheric loss, Gamma-Gamma turbulence, pointing error), the fidelity
of the delivered entangled pairs, and solves the joint base-station
association / generation-rate allocation problem with an alternating
optimization heuristic validated against exhaustive exact solvers.
"""

__version__ = "0.1.0"

from .fso_channel import (
    ChannelConfig,
    LinkGeometry,
    PointingParams,
    TurbulenceParams,
    atmospheric_loss,
    gamma_gamma_params,
    pointing_params,
    rytov_variance,
    sample_composite_gain,
    success_probability,
)
from .fidelity import (
    FidelityConfig,
    WernerState,
    channel_output_fidelity,
    decohere,
    end_to_end_fidelity,
    fidelity_to_werner,
)
from .scenario import Scenario, ScenarioConfig, eligibility_mask, generate, is_potentially_feasible
from .lp_core import LpProblem, LpSolution, check_feasible, solve
from .ao_optimizer import AoConfig, AoSolution, alternating_optimize
from .exact_oracle import enumerate_optimal, milp_reference

__all__ = [
    "ChannelConfig",
    "LinkGeometry",
    "TurbulenceParams",
    "PointingParams",
    "atmospheric_loss",
    "rytov_variance",
    "gamma_gamma_params",
    "pointing_params",
    "success_probability",
    "sample_composite_gain",
    "FidelityConfig",
    "WernerState",
    "channel_output_fidelity",
    "fidelity_to_werner",
    "decohere",
    "end_to_end_fidelity",
    "ScenarioConfig",
    "Scenario",
    "generate",
    "eligibility_mask",
    "is_potentially_feasible",
    "LpProblem",
    "LpSolution",
    "solve",
    "check_feasible",
    "AoConfig",
    "AoSolution",
    "alternating_optimize",
    "enumerate_optimal",
    "milp_reference",
]
