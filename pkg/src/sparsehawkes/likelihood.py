"""Exact per-dimension log-likelihood via a breakpoint sweep.

For histogram kernels the intensity path is piecewise constant with
breakpoints at (source event + bin edge); the compensator is an exact segment
sum. Spline kernels go through per-segment Gauss-Legendre quadrature.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .events import EventData
from .kernels import HistogramKernel
from .model import MissingHistoryError, intensity_at
from .params import ComponentParams


class UnsupportedRepresentationError(ValueError):
    pass


NEG_INF = float("-inf")


@dataclass(frozen=True)
class PiecewiseIntensity:
    """Constant rate per segment between consecutive breakpoints in [0, T]."""

    breakpoints: np.ndarray  # sorted, first = 0, last = T
    rates: np.ndarray  # one per segment, len = len(breakpoints) - 1
    component: int

    def rate_at(self, t) -> np.ndarray:
        """Rate of the open segment containing t (left limit at breakpoints)."""
        idx = np.searchsorted(self.breakpoints, np.asarray(t, float), "left") - 1
        return self.rates[np.clip(idx, 0, self.rates.size - 1)]

    def integral(self) -> float:
        return float(np.dot(np.diff(self.breakpoints), self.rates))


def _require_history(f_k: ComponentParams, events: EventData):
    horizon = f_k.horizon()
    if horizon is not None and events.t_start > -horizon:
        raise MissingHistoryError(
            f"events start at {events.t_start}, history back to {-horizon} required"
        )
    return horizon


def build_piecewise_intensity(
    f_k: ComponentParams, events: EventData, T: float, component: int = 0
) -> PiecewiseIntensity:
    """Exact piecewise-constant representation of t -> lambda_t(f_k) on [0, T]."""
    horizon = _require_history(f_k, events)
    for kern in f_k.kernels.values():
        if not isinstance(kern, HistogramKernel):
            raise UnsupportedRepresentationError(
                "piecewise representation requires histogram kernels"
            )
    step_times = [np.array([0.0, T])]
    step_deltas = [np.array([0.0, 0.0])]
    for l, kern in f_k.kernels.items():
        src = events.times[l]
        # only events with (s, s+A] intersecting [0, T] matter
        src = src[(src >= -horizon) & (src < T)]
        if not src.size:
            continue
        edges = kern.grid  # I+1 edges
        deltas = np.diff(np.concatenate([[0.0], kern.heights, [0.0]]))  # I+1 steps
        times = (src[:, None] + edges[None, :]).ravel()
        d = np.broadcast_to(deltas, (src.size, edges.size)).ravel()
        step_times.append(times)
        step_deltas.append(d)
    times = np.concatenate(step_times)
    deltas = np.concatenate(step_deltas)
    # fold steps at or before 0 into the initial rate; drop steps at/after T
    base = f_k.nu + float(np.sum(deltas[times <= 0.0]))
    keep = (times > 0.0) & (times < T)
    times, deltas = times[keep], deltas[keep]
    order = np.argsort(times, kind="stable")
    times, deltas = times[order], deltas[order]
    # collapse exactly coincident breakpoints
    if times.size:
        uniq, inv = np.unique(times, return_inverse=True)
        merged = np.zeros_like(uniq)
        np.add.at(merged, inv, deltas)
        times, deltas = uniq, merged
    breakpoints = np.concatenate([[0.0], times, [T]])
    rates = base + np.concatenate([[0.0], np.cumsum(deltas)])
    # clip tiny negative round-off
    rates = np.maximum(rates, 0.0)
    return PiecewiseIntensity(breakpoints, rates, component)


def _spline_breaks(f_k: ComponentParams, events: EventData, T: float) -> np.ndarray:
    horizon = f_k.horizon()
    pts = [np.array([0.0, T])]
    for l, kern in f_k.kernels.items():
        src = events.times[l]
        src = src[(src >= -horizon) & (src < T)]
        if isinstance(kern, HistogramKernel):
            offs = kern.grid
        else:
            offs = kern.knot_breaks()
        pts.append((src[:, None] + offs[None, :]).ravel())
    b = np.unique(np.concatenate(pts))
    return b[(b >= 0.0) & (b <= T)]


def _intensity_vector(f_k: ComponentParams, events: EventData, ts: np.ndarray) -> np.ndarray:
    """Vectorized left-limit intensity at many time points."""
    horizon = f_k.horizon()
    lam = np.full(ts.shape, f_k.nu)
    if horizon is None:
        return lam
    for l, kern in f_k.kernels.items():
        src = events.times[l]
        lo = np.searchsorted(src, ts - horizon, "left")
        hi = np.searchsorted(src, ts, "left")
        counts = hi - lo
        total = int(counts.sum())
        if total == 0:
            continue
        tgt_idx = np.repeat(np.arange(ts.size), counts)
        flat = np.concatenate([np.arange(a, b) for a, b in zip(lo, hi) if b > a])
        np.add.at(lam, tgt_idx, kern(ts[tgt_idx] - src[flat]))
    return lam


def compensator(f_k: ComponentParams, events: EventData, T: float) -> float:
    """Integral of the intensity over [0, T]; exact for histogram kernels."""
    _require_history(f_k, events)
    if all(isinstance(k, HistogramKernel) for k in f_k.kernels.values()):
        return build_piecewise_intensity(f_k, events, T).integral()
    # quadrature path: smooth within merged-breakpoint segments
    breaks = _spline_breaks(f_k, events, T)
    nodes, wts = np.polynomial.legendre.leggauss(32)
    total = 0.0
    for a, b in zip(breaks[:-1], breaks[1:]):
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        lam = _intensity_vector(f_k, events, mid + half * nodes)
        total += half * float(np.dot(wts, lam))
    return total


def log_likelihood(f_k: ComponentParams, events: EventData, T: float, component: int = 0):
    """L_{T,k}(f_k) = sum_{t in N^k cap [0,T]} log lambda_{t^-} - compensator.

    Returns -inf with no exception when some event sits at zero intensity
    (impossible when nu_k > 0).
    """
    _require_history(f_k, events)
    own = events.times[component]
    own = own[(own >= 0.0) & (own <= T)]
    lam = _intensity_vector(f_k, events, own) if own.size else np.empty(0)
    if np.any(lam <= 0.0):
        return NEG_INF
    return float(np.sum(np.log(lam))) - compensator(f_k, events, T)
