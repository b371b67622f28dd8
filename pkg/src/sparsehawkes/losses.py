"""Loss functions: stochastic intensity distance, parameter L1 norm, graph metrics.

The stochastic distance between two parameters f and f' for component k is
d_{1,T}(f, f')_k = (1/T) int_0^T |lambda_t^k(f) - lambda_t^k(f')| dt, evaluated
exactly for histogram kernels by merging the step breakpoints of both
intensities.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .events import EventData
from .kernels import HistogramKernel
from .params import ComponentParams, NetworkParams


def _step_deltas(f_k: ComponentParams, events: EventData, T: float):
    """(times, deltas) so lambda^k(t) = nu + sum of deltas at times <= t.

    Steps at or before 0 are folded into the base rate; steps at or after T
    are dropped. Only histogram kernels are supported.
    """
    base = f_k.nu
    all_times = []
    all_deltas = []
    for l, kern in f_k.kernels.items():
        if not isinstance(kern, HistogramKernel):
            raise TypeError("exact intensity distance requires histogram kernels")
        src = events.times[l]
        src = src[(src >= -kern.horizon) & (src < T)]
        if src.size == 0:
            continue
        edges = kern.grid  # I+1 points, 0 .. A
        h = kern.heights
        jump_at = np.concatenate([[edges[0]], edges[1:]])  # kernel's own steps
        jump_by = np.concatenate([[h[0]], np.diff(h, append=0.0)])
        # kernel value steps: +h[0] at lag 0+, h[i]-h[i-1] at t_i, -h[-1] at A
        t = (src[:, None] + jump_at[None, :]).ravel()
        d = np.broadcast_to(jump_by, (src.size, jump_at.size)).ravel().copy()
        past = t <= 0.0
        base += float(np.sum(d[past]))
        keep = (~past) & (t < T)
        all_times.append(t[keep])
        all_deltas.append(d[keep])
    if all_times:
        times = np.concatenate(all_times)
        deltas = np.concatenate(all_deltas)
    else:
        times = np.empty(0)
        deltas = np.empty(0)
    return base, times, deltas


def intensity_distance(
    f: NetworkParams, g: NetworkParams, events: EventData, T: float, k: int
) -> float:
    """Exact d_{1,T} for component k between parameters f and g."""
    if f.dimension != g.dimension or f.dimension != events.dimension:
        raise ValueError("dimension mismatch")
    if T <= 0:
        raise ValueError("need T > 0")
    base_f, t_f, d_f = _step_deltas(f.components[k], events, T)
    base_g, t_g, d_g = _step_deltas(g.components[k], events, T)
    times = np.concatenate([t_f, t_g])
    deltas = np.concatenate([d_f, -d_g])
    order = np.argsort(times, kind="stable")
    times = times[order]
    deltas = deltas[order]
    # piecewise-constant difference: value on segment ending at each breakpoint
    bks = np.concatenate([[0.0], times, [T]])
    vals = base_f - base_g + np.concatenate([[0.0], np.cumsum(deltas)])
    seg = np.diff(bks)
    return float(np.sum(np.abs(vals) * seg) / T)


def intensity_distance_all(
    f: NetworkParams, g: NetworkParams, events: EventData, T: float
) -> np.ndarray:
    return np.array(
        [intensity_distance(f, g, events, T, k) for k in range(f.dimension)]
    )


@dataclass(frozen=True)
class LossReport:
    """Decomposed L1 distance between two parameters (one component).

    l1_nu: |nu - nu'|; l1_false_mass: total mass placed on edges active in
    exactly one parameter; l1_active: integrated |h - h'| over shared edges.
    """

    component: int
    l1_nu: float
    l1_false_mass: float
    l1_active: float

    @property
    def total(self) -> float:
        return self.l1_nu + self.l1_false_mass + self.l1_active


def _kernel_l1(a: HistogramKernel, b: HistogramKernel) -> float:
    """Exact integral of |a - b| over [0, A] for histogram kernels."""
    if a.horizon != b.horizon:
        raise ValueError("kernel horizons differ")
    edges = np.unique(np.concatenate([a.grid, b.grid]))
    mid = (edges[:-1] + edges[1:]) / 2.0
    return float(np.sum(np.abs(a(mid) - b(mid)) * np.diff(edges)))


def l1_distance(f_k: ComponentParams, g_k: ComponentParams, k: int = 0) -> LossReport:
    """||f_k - g_k||_1 = |nu - nu'| + sum_l int |h_l - h'_l| with decomposition."""
    sf, sg = f_k.active_set, g_k.active_set
    false_mass = 0.0
    for l in sf - sg:
        false_mass += f_k.kernels[l].mass
    for l in sg - sf:
        false_mass += g_k.kernels[l].mass
    active = 0.0
    for l in sf & sg:
        active += _kernel_l1(f_k.kernels[l], g_k.kernels[l])
    return LossReport(
        component=k,
        l1_nu=abs(f_k.nu - g_k.nu),
        l1_false_mass=false_mass,
        l1_active=active,
    )


def l1_distance_network(f: NetworkParams, g: NetworkParams) -> float:
    if f.dimension != g.dimension:
        raise ValueError("dimension mismatch")
    return sum(
        l1_distance(f.components[k], g.components[k], k).total
        for k in range(f.dimension)
    )


@dataclass(frozen=True)
class GraphMetrics:
    true_positives: int
    false_positives: int
    false_negatives: int
    precision: float
    recall: float
    exact: bool


def graph_metrics(estimated, truth) -> GraphMetrics:
    """Edge-set precision/recall. An empty estimate has precision 1 by convention."""
    est = frozenset(estimated)
    tru = frozenset(truth)
    tp = len(est & tru)
    fp = len(est - tru)
    fn = len(tru - est)
    precision = 1.0 if not est else tp / len(est)
    recall = 1.0 if not tru else tp / len(tru)
    return GraphMetrics(
        true_positives=tp,
        false_positives=fp,
        false_negatives=fn,
        precision=precision,
        recall=recall,
        exact=(est == tru),
    )
