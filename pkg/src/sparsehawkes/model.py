"""Matrix functionals of the network parameter and moment bounds.

The mass matrix rho(f), its operator norms and spectral radius, the
stationary mean rate mu = (I - rho^T)^{-1} nu, the interaction adjacency, and
the closed-form moment constants (C0, C0bar, t(c), gamma).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .events import EventData
from .params import ComponentParams, NetworkParams


class NonStationaryError(ValueError):
    pass


class NumericalError(RuntimeError):
    pass


class MissingHistoryError(ValueError):
    pass


def intensity_at(f_k: ComponentParams, events: EventData, t: float) -> float:
    """Left-limit intensity nu_k + sum_l sum_{s in N^l cap [t-A, t)} h_lk(t-s).

    An event exactly at t does not contribute.
    """
    horizon = f_k.horizon()
    lam = f_k.nu
    if horizon is None:
        return lam
    if events.t_start > t - horizon:
        raise MissingHistoryError(
            f"events start at {events.t_start}, need history back to {t - horizon}"
        )
    for l, kernel in f_k.kernels.items():
        src = events.times[l]
        lo = np.searchsorted(src, t - horizon, "left")
        hi = np.searchsorted(src, t, "left")
        if hi > lo:
            lam += float(np.sum(kernel(t - src[lo:hi])))
    return lam


def mass_matrix(f: NetworkParams) -> np.ndarray:
    """rho[l, k] = integral of h_{lk}; exact for histograms, quadrature for splines."""
    K = f.dimension
    rho = np.zeros((K, K))
    for k, comp in enumerate(f.components):
        for l, kernel in comp.kernels.items():
            rho[l, k] = kernel.mass
    return rho


def adjacency(f: NetworkParams) -> np.ndarray:
    """Delta[l, k] = 1 iff rho_{lk}(f) > 0."""
    return (mass_matrix(f) > 0).astype(int)


def operator_norms(rho: np.ndarray):
    """(|||rho|||_inf, |||rho|||_1) = (max row sum, max column sum)."""
    rho = np.asarray(rho, dtype=float)
    return float(np.max(np.sum(rho, axis=1))), float(np.max(np.sum(rho, axis=0)))


def spectral_radius(rho: np.ndarray) -> float:
    """Spectral radius (largest eigenvalue modulus) of a nonnegative matrix."""
    rho = np.asarray(rho, dtype=float)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError("rho must be square")
    if np.any(rho < 0):
        raise ValueError("rho must be nonnegative")
    if rho.shape[0] == 0 or not np.any(rho):
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(rho))))


def stationary_mean(nu: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """Solve (I - rho^T) mu = nu; defined only when SpR(rho) < 1."""
    nu = np.asarray(nu, dtype=float)
    rho = np.asarray(rho, dtype=float)
    spr = spectral_radius(rho)
    if spr >= 1.0:
        raise NonStationaryError(f"spectral radius {spr} >= 1")
    return np.linalg.solve(np.eye(rho.shape[0]) - rho.T, nu)


@dataclass(frozen=True)
class MomentConstants:
    """Closed-form uniform moment bounds of a truth satisfying the hypotheses.

    C0 bounds the mean intensity, C0_bar the second moment of the intensity,
    and E[exp(t N^k[0,B))] <= exp(t*gamma*B) for all 0 <= t <= t_c.
    """

    c: float
    R_inf: float
    R_1: float
    c_1: float
    h_bar: float
    C0: float
    C0_bar: float
    t_c: float
    gamma: float


def moment_constants(c: float, R_inf: float, R_1: float, c_1: float, h_bar: float) -> MomentConstants:
    if not 0.0 < c < 1.0:
        raise ValueError(f"c must lie in (0, 1), got {c}")
    for name, v in [("R_inf", R_inf), ("R_1", R_1), ("c_1", c_1), ("h_bar", h_bar)]:
        if not (v > 0 and np.isfinite(v)):
            raise ValueError(f"{name} must be positive and finite, got {v}")
    C0 = c_1 * (1.0 - c + R_1) / (1.0 - c)
    C0_bar = C0**2 + C0 * h_bar * R_inf * R_1 * c / (1.0 - c)
    t_c = (np.log(1.0 + c) - np.log(2.0 * c)) / (1.0 + 2.0 * R_inf / (1.0 - c))
    gamma = 2.0 * C0 * R_1 / (1.0 - c)
    return MomentConstants(c, R_inf, R_1, c_1, h_bar, C0, C0_bar, float(t_c), gamma)


def power_certificates(rho: np.ndarray, c: float, n_max: int = 30):
    """Smallest (R_inf, R_1) with |||rho^n||| <= R c^n for n <= n_max."""
    rho = np.asarray(rho, dtype=float)
    R_inf = R_1 = 0.0
    power = np.eye(rho.shape[0])
    for n in range(1, n_max + 1):
        power = power @ rho
        n_inf, n_1 = operator_norms(power)
        R_inf = max(R_inf, n_inf / c**n)
        R_1 = max(R_1, n_1 / c**n)
    return R_inf, R_1


def validate_hypotheses(
    f: NetworkParams,
    c: float,
    R_inf: float,
    R_1: float,
    s0: int,
    h_bar: float,
    c0: float,
    c1: float,
    n_max: int = 30,
) -> None:
    """Check a user-supplied truth against the three standing hypotheses.

    Raises ValueError with the first violated condition.
    """
    rho = mass_matrix(f)
    if not 0 < c < 1:
        raise ValueError("c must lie in (0,1)")
    got_inf, got_1 = power_certificates(rho, c, n_max)
    if got_inf > R_inf * (1 + 1e-12):
        raise ValueError(f"|||rho^n|||_inf / c^n reaches {got_inf} > R_inf={R_inf}")
    if got_1 > R_1 * (1 + 1e-12):
        raise ValueError(f"|||rho^n|||_1 / c^n reaches {got_1} > R_1={R_1}")
    for k, comp in enumerate(f.components):
        if len(comp.active_set) > s0:
            raise ValueError(f"|S({k})| = {len(comp.active_set)} > s0 = {s0}")
        for l, kern in comp.kernels.items():
            if kern.sup() > h_bar * (1 + 1e-12):
                raise ValueError(f"sup h_{l},{k} = {kern.sup()} > h_bar = {h_bar}")
    nus = f.nus
    if np.min(nus) < c0 - 1e-12 or np.max(nus) > c1 + 1e-12:
        raise ValueError(f"background rates outside [{c0}, {c1}]")
