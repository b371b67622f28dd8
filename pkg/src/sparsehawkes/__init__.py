"""Sparse multivariate Hawkes processes: simulation, exact likelihoods,
reversible-jump posterior sampling, losses, and two-step graph selection."""

from .events import EventData, load_events, save_events
from .kernels import HistogramKernel, SplineKernel
from .likelihood import build_piecewise_intensity, compensator, log_likelihood
from .losses import (
    GraphMetrics,
    LossReport,
    graph_metrics,
    intensity_distance,
    l1_distance,
)
from .mcmc import McmcConfig, PosteriorSample, PosteriorSummary, run_chain, summarize
from .model import (
    MomentConstants,
    adjacency,
    intensity_at,
    mass_matrix,
    moment_constants,
    operator_norms,
    power_certificates,
    spectral_radius,
    stationary_mean,
)
from .params import ComponentParams, NetworkParams, load_params, save_params
from .priors import HistPriorSpec, NuPriorSpec, PriorSpecs, SizePriorSpec, SplinePriorSpec
from .simulate import simulate_cluster, simulate_thinning
from .twostep import default_threshold, select_graph, two_step

__version__ = "0.1.0"
