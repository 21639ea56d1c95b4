"""Simulation and stability certificates for conservative tensor-coupled flows on hypergraphs."""
from .hypergraph import (
    DisconnectedSupportError,
    HyperEdgeEntry,
    HyperTensorSet,
    SpecError,
    StructuralError,
    SupportGraph,
    TgdbReport,
    check_tgdb,
    decompose_layers,
    dump_spec,
    is_connected,
    load_spec,
    support_graph,
)
from .dynamics import (
    InputSignal,
    StateVector,
    StructuredKernel,
    TangentVector,
    embed_replicator,
    encode_structured_kernel,
    flow,
    frechet_in_tensor,
    jacobian,
    rate_kernel,
    vector_field,
    vector_field_with_input,
)
from .integrator import IntegratorConfig, Trajectory, detect_steady_state, integrate, project_simplex, rk4_step
from .analysis import (
    IssConstants,
    SensitivityReport,
    StabilityCertificate,
    dissipation_constant,
    entropy,
    entropy_rate_closed_form,
    equilibrium_from_tgdb,
    equilibrium_newton,
    iss_constants,
    iss_envelope_check,
    sensitivity_first_order,
    spectral_gap,
    tangent_basis,
)

__all__ = [
    "check_tgdb",
    "decompose_layers",
    "detect_steady_state",
    "DisconnectedSupportError",
    "dissipation_constant",
    "dump_spec",
    "embed_replicator",
    "encode_structured_kernel",
    "entropy",
    "entropy_rate_closed_form",
    "equilibrium_from_tgdb",
    "equilibrium_newton",
    "flow",
    "frechet_in_tensor",
    "HyperEdgeEntry",
    "HyperTensorSet",
    "InputSignal",
    "integrate",
    "IntegratorConfig",
    "is_connected",
    "iss_constants",
    "iss_envelope_check",
    "IssConstants",
    "jacobian",
    "load_spec",
    "project_simplex",
    "rate_kernel",
    "rk4_step",
    "sensitivity_first_order",
    "SensitivityReport",
    "SpecError",
    "spectral_gap",
    "StabilityCertificate",
    "StateVector",
    "StructuralError",
    "StructuredKernel",
    "support_graph",
    "SupportGraph",
    "tangent_basis",
    "TangentVector",
    "TgdbReport",
    "Trajectory",
    "vector_field",
    "vector_field_with_input",
]

__version__ = "0.1.0"
