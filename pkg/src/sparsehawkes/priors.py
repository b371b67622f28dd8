"""Model-selection prior family: graph-size prior, uniform subset prior,
random histogram prior, log-spline prior, and background-rate prior."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .kernels import HistogramKernel, SplineKernel, spline_quadrature
from .params import ComponentParams

NEG_INF = float("-inf")


class PriorError(ValueError):
    pass


def _truncated_poisson_pmf(mean: float, lo: int, hi: int) -> np.ndarray:
    s = np.arange(lo, hi + 1)
    logp = s * np.log(mean) - mean - gammaln(s + 1)
    p = np.exp(logp - logp.max())
    return p / p.sum()


@dataclass(frozen=True)
class SizePriorSpec:
    """Prior on |S|, truncated to {0, ..., cap}.

    variant: 'uniform', 'poisson' (needs mean), or 'double-exp-tail' with
    unnormalized mass exp(-a3 * exp(a2 * exp(a1 * s^q))).
    """

    variant: str
    cap: int
    mean: float = 1.0
    q: float = 2.0
    a1: float = 1.0
    a2: float = 1.0
    a3: float = 1.0
    _pmf: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.cap < 0:
            raise PriorError("cap must be >= 0")
        s = np.arange(self.cap + 1)
        if self.variant == "uniform":
            p = np.full(self.cap + 1, 1.0 / (self.cap + 1))
        elif self.variant == "poisson":
            if self.mean <= 0:
                raise PriorError("poisson mean must be positive")
            p = _truncated_poisson_pmf(self.mean, 0, self.cap)
        elif self.variant == "double-exp-tail":
            if self.q <= 1 or min(self.a1, self.a2, self.a3) <= 0:
                raise PriorError("tail variant needs q > 1 and a1,a2,a3 > 0")
            # evaluate in logs; the double exponential underflows very fast
            inner = np.minimum(self.a2 * np.exp(self.a1 * s.astype(float) ** self.q), 700.0)
            logp = -self.a3 * np.exp(inner)
            p = np.exp(logp - logp.max())
            p = p / p.sum()
        else:
            raise PriorError(f"unknown size prior variant {self.variant!r}")
        object.__setattr__(self, "_pmf", p)

    def pmf(self, s: int) -> float:
        if not 0 <= s <= self.cap:
            return 0.0
        return float(self._pmf[s])

    def sample(self, rng: np.random.Generator) -> int:
        return int(rng.choice(self.cap + 1, p=self._pmf))


@dataclass(frozen=True)
class HistPriorSpec:
    """Random histogram prior: I ~ Poisson(a) truncated to [1, I_max], weights
    (w_1..w_{I+1}) ~ Dirichlet(alpha); heights h_i = w_{i+1} * I / A so the
    leftover weight w_1 guarantees int h = 1 - w_1 < 1."""

    a: float
    alpha: float
    I_max: int = 64
    _pmf: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.a <= 0 or self.alpha <= 0 or self.I_max < 1:
            raise PriorError("hist prior needs a, alpha > 0 and I_max >= 1")
        object.__setattr__(self, "_pmf", _truncated_poisson_pmf(self.a, 1, self.I_max))

    def bin_count_pmf(self, I: int) -> float:
        if not 1 <= I <= self.I_max:
            return 0.0
        return float(self._pmf[I - 1])

    def sample_bin_count(self, rng: np.random.Generator) -> int:
        return int(rng.choice(np.arange(1, self.I_max + 1), p=self._pmf))

    def sample_kernel(self, horizon: float, rng: np.random.Generator) -> HistogramKernel:
        I = self.sample_bin_count(rng)
        w = rng.dirichlet(np.full(I + 1, self.alpha))
        return HistogramKernel(horizon, w[1:] * I / horizon)

    def log_density(self, kernel: HistogramKernel) -> float:
        """Log prior density of the heights vector (pmf of I + Dirichlet density
        of the induced weights + heights-to-weights Jacobian (A/I)^I)."""
        I = kernel.bin_count
        pmf = self.bin_count_pmf(I)
        if pmf == 0.0:
            return NEG_INF
        w_rest = kernel.weights()
        w1 = 1.0 - float(np.sum(w_rest))
        if w1 <= 0.0 or np.any(w_rest < 0.0):
            return NEG_INF
        alpha = self.alpha
        w = np.concatenate([[w1], w_rest])
        log_dir = float(
            gammaln((I + 1) * alpha)
            - (I + 1) * gammaln(alpha)
            + (alpha - 1.0) * np.sum(np.log(w))
        )
        return math.log(pmf) + log_dir + I * math.log(kernel.bin_width)


@dataclass(frozen=True)
class SplinePriorSpec:
    """Log-spline prior: J ~ Poisson(a) truncated to [order, J_max],
    theta_j iid N(0, tau^2), truncated to the mass constraint int h < 1."""

    a: float
    tau: float
    order: int = 2
    J_max: int = 64
    mc_draws: int = 10_000

    def __post_init__(self):
        if self.a <= 0 or self.tau <= 0 or self.order < 1:
            raise PriorError("spline prior needs a, tau > 0 and order >= 1")
        object.__setattr__(self, "_pmf_cache", None)
        object.__setattr__(self, "_trunc_cache", {})

    def _pmf_vec(self) -> np.ndarray:
        if self._pmf_cache is None:
            object.__setattr__(
                self, "_pmf_cache", _truncated_poisson_pmf(self.a, self.order, self.J_max)
            )
        return self._pmf_cache

    def coef_count_pmf(self, J: int) -> float:
        if not self.order <= J <= self.J_max:
            return 0.0
        return float(self._pmf_vec()[J - self.order])

    def truncation_mass(self, J: int, horizon: float) -> float:
        """Pi(int h < 1 | J), estimated once by Monte Carlo and cached."""
        key = (J, horizon)
        if key not in self._trunc_cache:
            # deterministic stream independent of caller RNGs
            rng = np.random.default_rng([1299709, J, self.order, int(self.tau * 1e9)])
            _, wts, basis = spline_quadrature(horizon, self.order, J)
            thetas = rng.normal(0.0, self.tau, (self.mc_draws, J))
            masses = np.exp(thetas @ basis.T) @ wts
            ok = int(np.sum(masses < 1.0))
            self._trunc_cache[key] = (ok + 1) / (self.mc_draws + 2)
        return self._trunc_cache[key]

    def sample_kernel(self, horizon: float, rng: np.random.Generator, max_tries: int = 10_000) -> SplineKernel:
        J = int(rng.choice(np.arange(self.order, self.J_max + 1), p=self._pmf_vec()))
        for _ in range(max_tries):
            theta = rng.normal(0.0, self.tau, J)
            try:
                return SplineKernel(horizon, self.order, theta)
            except ValueError:
                continue
        raise PriorError(
            f"mass constraint rejected {max_tries} consecutive spline draws (J={J}, tau={self.tau})"
        )

    def log_density(self, kernel: SplineKernel) -> float:
        J = kernel.coefficient_count
        pmf = self.coef_count_pmf(J)
        if pmf == 0.0 or kernel.mass >= 1.0:
            return NEG_INF
        theta = kernel.coefficients
        log_gauss = float(
            -0.5 * J * math.log(2 * math.pi * self.tau**2)
            - 0.5 * np.sum(theta**2) / self.tau**2
        )
        return math.log(pmf) + log_gauss - math.log(self.truncation_mass(J, kernel.horizon))


@dataclass(frozen=True)
class NuPriorSpec:
    """Gamma(shape, rate) prior on the background rate."""

    shape: float
    rate: float

    def __post_init__(self):
        if self.shape <= 0 or self.rate <= 0:
            raise PriorError("Gamma shape and rate must be positive")

    def sample(self, rng: np.random.Generator) -> float:
        return float(rng.gamma(self.shape, 1.0 / self.rate))

    def log_density(self, nu: float) -> float:
        if not nu > 0:
            return NEG_INF
        return float(
            self.shape * math.log(self.rate)
            - gammaln(self.shape)
            + (self.shape - 1.0) * math.log(nu)
            - self.rate * nu
        )


@dataclass(frozen=True)
class PriorSpecs:
    """Bundle of the hierarchical prior for one component."""

    size: SizePriorSpec
    kernel: object  # HistPriorSpec or SplinePriorSpec
    nu: NuPriorSpec
    horizon: float

    def __post_init__(self):
        if self.horizon <= 0:
            raise PriorError("horizon must be positive")


def log_binom(K: int, s: int) -> float:
    return float(gammaln(K + 1) - gammaln(s + 1) - gammaln(K - s + 1))


def sample_component_prior(specs: PriorSpecs, K: int, rng: np.random.Generator) -> ComponentParams:
    """Draw f_k: |S| from the size prior, S uniform among size-|S| subsets,
    kernels iid from the kernel prior on S, and nu from the nu prior."""
    s = min(specs.size.sample(rng), K)
    subset = rng.choice(K, size=s, replace=False) if s else np.empty(0, int)
    kernels = {int(l): specs.kernel.sample_kernel(specs.horizon, rng) for l in subset}
    return ComponentParams(nu=specs.nu.sample(rng), kernels=kernels)


def log_prior_density(specs: PriorSpecs, f_k: ComponentParams, K: int) -> float:
    """Log prior density of f_k; -inf outside the support."""
    s = len(f_k.active_set)
    pmf = specs.size.pmf(s)
    if pmf == 0.0:
        return NEG_INF
    total = math.log(pmf) - log_binom(K, s) + specs.nu.log_density(f_k.nu)
    for kern in f_k.kernels.values():
        total += specs.kernel.log_density(kern)
    return total


def size_prior_pmf(spec: SizePriorSpec, s: int) -> float:
    return spec.pmf(s)
