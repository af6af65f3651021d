"""Bayesian change-point detection in dynamic Gaussian graphical models.

Piece-wise-constant graph and precision dynamics with G-Wishart conjugacy;
inference by an outer reversible-jump chain over change points driven by an
inner tempered particle filter (pseudo-marginal MCMC).
"""

from .graphs import (
    Graph,
    GraphMetrics,
    PrimeDecomposition,
    flip_edge,
    graph_metrics,
    is_decomposable,
    prime_decomposition,
    read_edge_list,
    write_edge_list,
)
from .gwishart import (
    GWishartParams,
    MarginalEvaluator,
    SegmentStatistics,
    log_marginal_likelihood,
    log_norm_const,
    log_norm_const_complete,
    log_norm_const_mc,
    sample_gwishart,
)
from .priors import (
    ChangePointConfig,
    ModelHyperparams,
    count_configs,
    expected_kappa,
    log_graph_initial_prior,
    log_graph_transition_prior,
    log_prior_config,
    max_changepoints,
    sample_config,
    sample_prior,
)
from .smc import (
    LikelihoodEstimate,
    ParticleCloud,
    SmcParams,
    TemperatureLadder,
    ess,
    multinomial_resample,
    mutate,
    run_particle_filter,
    solve_next_temperature,
    tune_temperatures,
)
from .pmcmc import (
    ChainState,
    MoveProbabilities,
    PosteriorTrace,
    TraceRecord,
    feasible_positions,
    mh_step,
    propose,
    run_chain,
)
from .analysis import (
    EdgePPI,
    credible_set_cp,
    edge_ppi,
    evaluate_vs_truth,
    fdr_threshold,
    kappa_distribution,
    map_config,
    marginal_cp_probability,
    posterior_predictive,
    precision_posterior,
)
from .datasim import (
    ReturnsPanel,
    ScenarioSpec,
    empirical_omega,
    load_returns_csv,
    log_returns,
    nearest_pd,
    simulate_scenario,
)
from .rng import StreamFactory

__version__ = "0.1.0"
