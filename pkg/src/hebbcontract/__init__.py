"""Simulation and contraction certificates for coupled neural-synaptic networks."""
from .analysis import (
    Bounds,
    Certificate,
    MajorantParams,
    aggregate_metzler_majorant,
    certify,
    certify_params,
    composite_lognorm_bound,
    compute_bounds,
    compute_eta,
    condition_rhs,
    lognorm_inf,
    majorant_bound,
    metzler_majorant,
    spectral_abscissa,
    weighted_lognorm,
)
from .dynamics import (
    Activation,
    JacobianBlocks,
    ModelSpec,
    Signal,
    Stimulus,
    SystemState,
    dense_vector_field,
    jacobian,
    phi,
    phi_prime,
    vector_field,
)
from .errors import HebbContractError
from .simulate import (
    Trajectory,
    check_dale,
    check_entrainment,
    check_invariance,
    check_skew_decay,
    empirical_rate,
    integrate,
    integrate_delayed,
    integrate_dense,
    integrate_many,
    random_initial_states,
)
from .topology import (
    Topology,
    apply_weighted,
    build_topology,
    from_adjacency,
    gather_post,
    gather_pre,
    max_in_degree,
    reconstruct_adjacency,
)

__version__ = "0.1.0"
