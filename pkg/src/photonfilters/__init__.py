"""Conditional dynamics of a two-level emitter driven by a single photon.

The emitter's output is split on a beam splitter and both arms are watched,
by homodyne detectors, photon counters, or one of each.  This package
integrates the matching stochastic filter hierarchies as seeded
jump-diffusion trajectories, provides the unconditional reference dynamics,
cross-checks against an extended-system vacuum filter, and ships a CLI that
writes reproducible data/figure bundles.
"""

from .qcore import (
    BeamSplitter, SLHTriple, SystemModel, adjoint, beam_splitter,
    build_extended_system, concatenation_product, dissipator,
    dissipator_adjoint, identity, ket_e, ket_g, lindbladian, liouvillian,
    series_product, sigma_minus, sigma_plus, slh, tensor_embed,
)
from .pulse import EPS_W, PulseShape, xi_exponential, xi_gaussian
from .stochastic import (
    IncrementRecord, RngStream, derive_stream, draw_increments, jump_decision,
    wiener_increment,
)
from .filters import (
    ALL_SCHEMES, COUNTING_SCHEMES, DIFFUSIVE_SCHEMES, EPS_K, SCHEME_HP,
    SCHEME_ME, SCHEME_PP, SCHEME_QP, SCHEME_QQ, SCHEME_SH, ExtendedState,
    FilterState, Gains, MeasurementConfig, counting_rate, extended_parts,
    gains, heisenberg_increment, me_rhs, min_eig, pe, reduced_expectation,
    step_hp, step_pp, step_qp, step_qq, step_single_homodyne,
    vacuum_filter_step,
)
from .ensemble import (
    CHUNK_SIZE, EnsembleResult, ExceedanceStats, MasterSolution,
    SimulationConfig, TrajectoryRecord, duality_scan, exceedance_fraction,
    oracle_compare, run_ensemble, run_trajectory, solve_master,
    wilson_interval,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # operators and networks
    "BeamSplitter", "SLHTriple", "SystemModel", "adjoint", "beam_splitter",
    "build_extended_system", "concatenation_product", "dissipator",
    "dissipator_adjoint", "identity", "ket_e", "ket_g", "lindbladian",
    "liouvillian", "series_product", "sigma_minus", "sigma_plus", "slh",
    "tensor_embed",
    # pulses
    "EPS_W", "PulseShape", "xi_exponential", "xi_gaussian",
    # noise
    "IncrementRecord", "RngStream", "derive_stream", "draw_increments",
    "jump_decision", "wiener_increment",
    # filters
    "ALL_SCHEMES", "COUNTING_SCHEMES", "DIFFUSIVE_SCHEMES", "EPS_K",
    "SCHEME_HP", "SCHEME_ME", "SCHEME_PP", "SCHEME_QP", "SCHEME_QQ",
    "SCHEME_SH", "ExtendedState", "FilterState", "Gains", "MeasurementConfig",
    "counting_rate", "extended_parts", "gains", "heisenberg_increment",
    "me_rhs", "min_eig", "pe", "reduced_expectation", "step_hp", "step_pp",
    "step_qp", "step_qq", "step_single_homodyne", "vacuum_filter_step",
    # runs
    "CHUNK_SIZE", "EnsembleResult", "ExceedanceStats", "MasterSolution",
    "SimulationConfig", "TrajectoryRecord", "duality_scan",
    "exceedance_fraction", "oracle_compare", "run_ensemble", "run_trajectory",
    "solve_master", "wilson_interval",
]
