"""Energy transport in chains of two-level emitters coupled through
reciprocal or unidirectional photonic environments."""

__version__ = "0.1.0"

from .operators import (
    ChainSpec,
    basis_state,
    devectorize,
    lowering_operator,
    raising_operator,
    system_hamiltonian,
    vectorize,
)
from .environment import (
    QuadratureModel,
    RateSet,
    SppChainModel,
    load_rate_table,
    make_artificially_reciprocal,
    quadrature_rate_set,
    reverse_bias,
    save_rate_table,
    spp_chain_rate_set,
    unidirectionalize_two_atom,
    validate_rates,
)
from .dynamics import (
    Liouvillian,
    Trajectory,
    build_liouvillian,
    cross_dissipator,
    dissipator,
    evolve,
    steady_state,
    steady_state_oracle,
)
from .transport import (
    EfficiencyTrace,
    ScanBase,
    ScanResult,
    efficiency_trace,
    excited_populations,
    extraction_flux,
    pump_flux,
    scan,
    stationary_efficiency,
)

__all__ = [
    "__version__",
    "ChainSpec",
    "basis_state",
    "devectorize",
    "lowering_operator",
    "raising_operator",
    "system_hamiltonian",
    "vectorize",
    "QuadratureModel",
    "RateSet",
    "SppChainModel",
    "load_rate_table",
    "make_artificially_reciprocal",
    "quadrature_rate_set",
    "reverse_bias",
    "save_rate_table",
    "spp_chain_rate_set",
    "unidirectionalize_two_atom",
    "validate_rates",
    "Liouvillian",
    "Trajectory",
    "build_liouvillian",
    "cross_dissipator",
    "dissipator",
    "evolve",
    "steady_state",
    "steady_state_oracle",
    "EfficiencyTrace",
    "ScanBase",
    "ScanResult",
    "efficiency_trace",
    "excited_populations",
    "extraction_flux",
    "pump_flux",
    "scan",
    "stationary_efficiency",
]
