"""Two-step interaction-graph estimation.

Step one thresholds the posterior mean masses from a full (all-edges-allowed)
chain; step two reruns the sampler with edge moves disabled on the selected
set.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .events import EventData
from .mcmc import McmcConfig, PosteriorSample, PosteriorSummary, run_chain, summarize
from .priors import PriorSpecs


def default_threshold(K: int, T: float, eps_T_hint: float = 0.0, C_u: float = 2.0) -> float:
    """u_T = C_u (1 + log K) (log T) max(eps_T_hint, sqrt(log K / T))."""
    if K < 1 or T <= 1.0:
        raise ValueError("need K >= 1 and T > 1")
    floor = math.sqrt(math.log(K) / T) if K > 1 else 0.0
    return C_u * (1.0 + math.log(K)) * math.log(T) * max(eps_T_hint, floor)


def select_graph(rho_hat: np.ndarray, threshold: float):
    """Select sources whose masses cannot be discarded under the threshold.

    Sort rho_hat descending (stable: ties keep the smaller index first), find
    the smallest rank l_hat with sum of masses from rank l_hat on <= threshold,
    and keep the sources ranked strictly below l_hat.
    """
    rho_hat = np.asarray(rho_hat, dtype=float)
    if np.any(rho_hat < 0):
        raise ValueError("masses must be nonnegative")
    K = rho_hat.size
    order = np.argsort(-rho_hat, kind="stable")
    sorted_rho = rho_hat[order]
    tails = np.concatenate([np.cumsum(sorted_rho[::-1])[::-1], [0.0]])
    l_hat = int(np.argmax(tails <= threshold))  # first index meeting the cut
    selected = frozenset(int(order[j]) for j in range(l_hat))
    return selected, l_hat


@dataclass(frozen=True)
class TwoStepResult:
    component: int
    threshold: float
    rho_hat_full: np.ndarray
    selected: frozenset
    rank_cut: int
    full_sample: PosteriorSample
    refit_sample: PosteriorSample
    full_summary: PosteriorSummary
    refit_summary: PosteriorSummary


def two_step(
    k: int,
    events: EventData,
    priors: PriorSpecs,
    config: McmcConfig,
    seed,
    threshold: float | None = None,
    eps_T_hint: float = 0.0,
) -> TwoStepResult:
    """Full chain, thresholded selection, then a fixed-set refit chain."""
    K = events.dimension
    if threshold is None:
        threshold = default_threshold(K, events.t_end, eps_T_hint)
    full = run_chain(k, events, priors, config, seed)
    full_summary = summarize(full, K)
    selected, l_hat = select_graph(full_summary.rho_hat, threshold)
    refit = run_chain(
        k, events, priors, config, _refit_seed(seed), fixed_set=selected
    )
    refit_summary = summarize(refit, K)
    return TwoStepResult(
        component=k,
        threshold=threshold,
        rho_hat_full=full_summary.rho_hat,
        selected=selected,
        rank_cut=l_hat,
        full_sample=full,
        refit_sample=refit,
        full_summary=full_summary,
        refit_summary=refit_summary,
    )


def _refit_seed(seed):
    if isinstance(seed, (list, tuple)):
        return list(seed) + [1]
    return [int(seed), 1]
