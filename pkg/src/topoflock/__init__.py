"""Topological Cucker-Smale flocking at particle, kinetic and hydrodynamic scale."""
from .exceptions import CFLError, ConfigError, DomainError, GridMismatchError, NumericError
from .experiments import RunManifest, compare_moments, run_test
from .kernels import KernelSpec, eval_kernel
from .kinetic import KineticVlasov, PhaseGrid, moments, simulate_kinetic, step_upwind
from .macro import MacroConfig, MacroEuler, MacroState, simulate_macro, step_macro
from .micro import AgentState, MicroConfig, MicroFlock, simulate_micro, step_semi_implicit
from .scenarios import ScenarioConfig, default_config
from .topology import interaction_matrix, normalized_ball_mass, topological_rank_matrix

__all__ = [
    "AgentState", "CFLError", "ConfigError", "DomainError", "GridMismatchError", "KernelSpec",
    "KineticVlasov", "MacroConfig", "MacroEuler", "MacroState", "MicroConfig", "MicroFlock",
    "NumericError", "PhaseGrid", "RunManifest", "ScenarioConfig", "compare_moments",
    "default_config", "eval_kernel", "interaction_matrix", "moments", "normalized_ball_mass",
    "run_test", "simulate_kinetic", "simulate_macro", "simulate_micro", "step_macro",
    "step_semi_implicit", "step_upwind", "topological_rank_matrix",
]
