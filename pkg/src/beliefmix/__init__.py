"""Loopy belief propagation on pairwise encodings of probability mixtures."""

__version__ = "0.1.0"

from .factor_graph import (
    FactorGraph,
    PairwiseStats,
    EdgeRanking,
    clamp_probs,
    validate_stats,
    pruning_score,
    prune,
    subset_stats,
    sort_edges,
    wst_edge_fractions,
    read_stats_csv,
    write_stats_csv,
)
from .bp import (
    Potentials,
    MessageSet,
    BeliefSet,
    Evidence,
    GuideSchedule,
    BpConfig,
    RunStatus,
    CountingNumbers,
    uniform_messages,
    random_messages,
    bp_step,
    run_bp,
    compute_beliefs,
    gbp_step,
    run_gbp,
    gbp_beliefs,
    bethe_free_energy,
    classify_fixed_points,
)
from .encode import (
    AlphaModel,
    QuantileModel,
    Couplings,
    bethe_potentials,
    tempered_potentials,
    quantile_potentials,
    ising_couplings,
    beta_of_alpha,
    alpha_of_beta,
    read_model_toml,
    write_model_toml,
)
from .mixture import (
    DEFAULT_RHO_GRID,
    MixtureModel,
    Metrics,
    DecimationCurve,
    Census,
    field_variance,
    h_max_for_variance,
    generate_mixture,
    exact_pair_stats,
    sample_component,
    exact_conditionals,
    exact_conditional,
    compute_metrics,
    build_model_potentials,
    run_decimation,
    fixed_point_census,
    write_decimation_csv,
    write_census_csv,
)
from .mean_field import (
    MFParams,
    MFState,
    PhaseDiagram,
    TuneResult,
    solve_ags,
    ags_residual,
    solve_branches,
    decimated_params,
    solve_finite_c,
    finite_c_residual,
    phase_boundaries,
    dkl_rho1,
    w_of_beta,
    mf_decimation_dkl,
    mf_dkl_curve,
    tune_alpha_of_rho,
    write_phase_csv,
    write_mf_dkl_csv,
)
from .cmaes import (
    CmaesConfig,
    CmaesResult,
    OptimizationTrace,
    cmaes_minimize,
    grid_weights,
    fitness_global,
    fitness_surrogate,
    decode_quantile_genome,
    optimize_quantiles,
    write_trace_csv,
)
