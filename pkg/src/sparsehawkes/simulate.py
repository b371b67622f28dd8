"""Exact simulation by the cluster (branching) representation and by Ogata
thinning, plus ergodic-average diagnostics."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .events import EventData
from .kernels import HistogramKernel
from .model import NonStationaryError, mass_matrix, spectral_radius, stationary_mean
from .params import NetworkParams


class BudgetError(RuntimeError):
    def __init__(self, msg, report=None):
        super().__init__(msg)
        self.report = report


@dataclass
class SimReport:
    counts: np.ndarray
    empirical_rates: np.ndarray
    target_rates: np.ndarray
    warmup: float
    generation_histogram: dict = field(default_factory=dict)
    parent_counts: np.ndarray | None = None  # events per type that could spawn
    offspring_counts: np.ndarray | None = None  # children spawned, by parent type


def _stream(seed, *key) -> np.random.Generator:
    base = list(seed) if isinstance(seed, (list, tuple)) else [int(seed)]
    return np.random.default_rng([*map(int, base), *map(int, key)])


def _kernel_offsets(kernel, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw n lags from the density h / mass(h) on (0, A]."""
    if isinstance(kernel, HistogramKernel):
        p = kernel.weights() / kernel.mass
        bins = rng.choice(kernel.bin_count, p=p, size=n)
        return (bins + rng.random(n)) * kernel.bin_width
    # spline kernels: numerical inverse CDF on a fine grid
    grid = np.linspace(0.0, kernel.horizon, 8193)
    vals = kernel(np.maximum(grid, 1e-12))
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (vals[1:] + vals[:-1]) * np.diff(grid))])
    cdf /= cdf[-1]
    return np.interp(rng.random(n), cdf, grid)


def _dedupe_ties(times: np.ndarray) -> np.ndarray:
    """Break floating-point ties by bumping the later event one ulp."""
    times = np.sort(times)
    for i in range(1, times.size):
        if times[i] <= times[i - 1]:
            times[i] = np.nextafter(times[i - 1], np.inf)
    return times


def cluster_warmup(f: NetworkParams, eps: float = 1e-6) -> float:
    """Immigrant window extension W = A * ceil(log eps / log c): generation-n
    mass decays like c^n and reaches at most n*A back."""
    spr = spectral_radius(mass_matrix(f))
    c = min(max(spr, 1e-3), 0.999)
    return f.horizon * float(np.ceil(np.log(eps) / np.log(c)))


def simulate_cluster(
    f: NetworkParams,
    T: float,
    seed: int,
    eps: float = 1e-6,
    budget_factor: float = 10.0,
):
    """Branching simulation: Poisson(nu_k) immigrants on [-W, T]; each event of
    type l spawns type-k offspring from an inhomogeneous Poisson with intensity
    h_{lk}(. - parent) on (parent, parent + A]."""
    rho = mass_matrix(f)
    spr = spectral_radius(rho)
    if spr >= 1.0:
        raise NonStationaryError(f"spectral radius {spr} >= 1")
    K, A = f.dimension, f.horizon
    W = cluster_warmup(f, eps)
    mu = stationary_mean(f.nus, rho)
    budget = budget_factor * float(np.sum(mu)) * (T + W)

    all_times = [[] for _ in range(K)]
    gen_hist: dict[int, int] = {}
    parent_counts = np.zeros(K, dtype=int)
    offspring_counts = np.zeros(K, dtype=int)

    cur_times_by_type = []
    for k in range(K):
        rng_k = _stream(seed, 0, k)
        n_imm = rng_k.poisson(f.components[k].nu * (T + W))
        t = -W + rng_k.random(n_imm) * (T + W)
        cur_times_by_type.append(t)
        all_times[k].append(t)
    total = sum(t.size for t in cur_times_by_type)
    gen_hist[0] = total

    rng_off = _stream(seed, 1)
    gen = 0
    while total <= budget:
        gen += 1
        nxt = [[] for _ in range(K)]
        produced = 0
        for l in range(K):
            parents = cur_times_by_type[l]
            if not parents.size:
                continue
            parent_counts[l] += parents.size
            for k in range(K):
                if rho[l, k] <= 0.0:
                    continue
                kern = f.components[k].kernels[l]
                counts = rng_off.poisson(rho[l, k], size=parents.size)
                n = int(counts.sum())
                offspring_counts[l] += n
                if n == 0:
                    continue
                child = np.repeat(parents, counts) + _kernel_offsets(kern, n, rng_off)
                child = child[child <= T]
                if child.size:
                    nxt[k].append(child)
                    produced += child.size
        if produced == 0:
            break
        gen_hist[gen] = produced
        total += produced
        cur_times_by_type = [
            np.concatenate(v) if v else np.empty(0) for v in nxt
        ]
        for k in range(K):
            if cur_times_by_type[k].size:
                all_times[k].append(cur_times_by_type[k])

    times = tuple(
        _dedupe_ties(np.concatenate(v)) if v else np.empty(0) for v in all_times
    )
    kept = tuple(t[(t >= -A) & (t <= T)] for t in times)
    events = EventData(K, -A, T, kept)
    counts = events.counts()
    rates = np.array(
        [events.count_in(k, 0.0, np.nextafter(T, np.inf)) / T if T > 0 else 0.0 for k in range(K)]
    )
    report = SimReport(counts, rates, mu, W, gen_hist, parent_counts, offspring_counts)
    if total > budget:
        raise BudgetError(
            f"event budget {budget:.0f} exceeded at generation {gen} (near-critical rho?)",
            report=report,
        )
    return events, report


def simulate_thinning(
    f: NetworkParams,
    T: float,
    warmup: float | None = None,
    seed: int = 0,
    budget_factor: float = 10.0,
):
    """Ogata-style thinning with a piecewise-constant dominating intensity
    refreshed at each accepted event. Simulates on [-warmup, T], returns
    [-A, T]."""
    rho = mass_matrix(f)
    spr = spectral_radius(rho)
    if spr >= 1.0:
        raise NonStationaryError(f"spectral radius {spr} >= 1")
    K, A = f.dimension, f.horizon
    if warmup is None:
        warmup = 20.0 * A
    mu = stationary_mean(f.nus, rho)
    budget = budget_factor * float(np.sum(mu)) * (T + warmup)

    # sup-norm bound per (source, target): an in-window event of type l adds at
    # most sup h_{lk} to lambda^k until it leaves the window
    sup_bound = np.zeros((K, K))
    for k, comp in enumerate(f.components):
        for l, kern in comp.kernels.items():
            sup_bound[l, k] = kern.sup()
    nu_total = float(np.sum(f.nus))

    rng = _stream(seed, 2)
    times: list[list[float]] = [[] for _ in range(K)]
    recent: list[float] = []  # all event times, ascending
    recent_types: list[int] = []
    t = -warmup
    n_events = 0
    while True:
        # dominating rate valid until the next accepted event
        m = nu_total
        cutoff = t - A
        i0 = 0
        for i in range(len(recent) - 1, -1, -1):
            if recent[i] <= cutoff:
                i0 = i + 1
                break
        recent = recent[i0:]
        recent_types = recent_types[i0:]
        for s_type in recent_types:
            m += float(np.sum(sup_bound[s_type]))
        if not np.isfinite(m) or m <= 0:
            raise BudgetError("dominating rate overflow")
        t += rng.exponential(1.0 / m)
        if t > T:
            break
        lam = np.array([c.nu for c in f.components])
        for s_time, s_type in zip(recent, recent_types):
            lag = t - s_time
            if 0.0 < lag <= A:
                for k, comp in enumerate(f.components):
                    kern = comp.kernels.get(s_type)
                    if kern is not None:
                        lam[k] += float(kern(lag))
        lam_total = float(np.sum(lam))
        u = rng.random()
        if u <= lam_total / m:
            k = int(np.searchsorted(np.cumsum(lam) / lam_total, rng.random(), "left"))
            k = min(k, K - 1)
            times[k].append(t)
            recent.append(t)
            recent_types.append(k)
            n_events += 1
            if n_events > budget:
                raise BudgetError(f"event budget {budget:.0f} exceeded in thinning")

    full = tuple(_dedupe_ties(np.array(v)) for v in times)
    kept = tuple(x[(x >= -A) & (x <= T)] for x in full)
    events = EventData(K, -A, T, kept)
    counts = events.counts()
    rates = np.array(
        [events.count_in(k, 0.0, np.nextafter(T, np.inf)) / T if T > 0 else 0.0 for k in range(K)]
    )
    return events, SimReport(counts, rates, mu, warmup)


def ergodicity_check(
    events: EventData, f: NetworkParams, splits: int, tol: float = 0.1
):
    """Deviation of empirical rates from the stationary mean, on the full
    window and on `splits` equal sub-windows. Returns a list of row dicts."""
    mu = stationary_mean(f.nus, mass_matrix(f))
    T = events.t_end
    rows = []

    def deviation(lo, hi):
        width = hi - lo
        devs = [
            abs(events.count_in(k, lo, hi) / width - mu[k])
            for k in range(events.dimension)
        ]
        return max(devs)

    d = deviation(0.0, T)
    rows.append({"window": "full", "start": 0.0, "end": T, "max_deviation": d, "flagged": d > tol})
    for j in range(splits):
        lo, hi = j * T / splits, (j + 1) * T / splits
        d = deviation(lo, hi)
        rows.append(
            {"window": f"split{j}", "start": lo, "end": hi, "max_deviation": d, "flagged": d > tol}
        )
    return rows
