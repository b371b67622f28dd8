"""Per-dimension reversible-jump Metropolis-Hastings sampler.

Targets Pi_k(. | N) ~ exp(L_{T,k}(f_k)) * pi_k(f_k). The chain state lives in
weight space: each active edge carries (I, w) with w on the (I+1)-simplex and
heights h_i = w_{i+1} * I / A, so every trans-dimensional ratio is a plain
density ratio of truncated-Poisson x Dirichlet terms. Likelihood evaluations
are incremental: per-edge intensity contributions and compensator terms are
cached and audited against full recomputation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import gammaln

from .events import EventData
from .kernels import HistogramKernel
from .model import NumericalError
from .params import ComponentParams
from .priors import PriorSpecs, log_binom

NEG_INF = float("-inf")


@dataclass(frozen=True)
class McmcConfig:
    iterations: int = 50_000
    burn_in: int = 20_000
    thinning: int = 10
    p_update_nu: float = 0.2
    p_update_heights: float = 0.3
    p_change_bins: float = 0.2
    p_add_edge: float = 0.1
    p_remove_edge: float = 0.1
    p_swap_edge: float = 0.1
    nu_scale: float = 0.3
    heights_scale: float = 0.3
    adapt: bool = True
    audit_every: int = 1000
    audit_tol: float = 1e-8

    def __post_init__(self):
        probs = self.move_probs()
        if abs(sum(probs) - 1.0) > 1e-12:
            raise ValueError(f"move probabilities sum to {sum(probs)}, not 1")
        if not 0 <= self.burn_in < self.iterations:
            raise ValueError("need 0 <= burn_in < iterations")

    def move_probs(self):
        return (
            self.p_update_nu,
            self.p_update_heights,
            self.p_change_bins,
            self.p_add_edge,
            self.p_remove_edge,
            self.p_swap_edge,
        )


MOVES = ("update_nu", "update_heights", "change_bins", "add_edge", "remove_edge", "swap_edge")


class LikelihoodEngine:
    """Exact histogram-kernel likelihood for one target component.

    Precomputes, per source l, the (target event, lag) pairs with lag in
    (0, A], and turns both likelihood terms into linear forms in the heights:
    lambda_i = nu + sum_l bincount(tgt_idx_l, heights_l[bin_l]) and
    compensator = nu*T + sum_l <w_l(I), heights_l>.
    """

    def __init__(self, events: EventData, k: int, T: float, horizon: float):
        if events.t_start > -horizon:
            raise ValueError(
                f"events start at {events.t_start}, history back to {-horizon} required"
            )
        self.T = float(T)
        self.A = float(horizon)
        self.k = k
        self.K = events.dimension
        tgt = events.times[k]
        self.tgt = tgt[(tgt >= 0.0) & (tgt <= T)]
        self.n = self.tgt.size
        self._lags = {}
        self._tgt_idx = {}
        self._src_interior = np.zeros(self.K, dtype=int)
        self._src_boundary = {}
        for l in range(self.K):
            src = events.times[l]
            src = src[(src >= -horizon) & (src <= T)]
            lo = np.searchsorted(src, self.tgt - horizon, "left")
            hi = np.searchsorted(src, self.tgt, "left")
            counts = hi - lo
            total = int(counts.sum())
            if total:
                flat = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
                src_idx = np.repeat(lo, counts) + flat
                tgt_idx = np.repeat(np.arange(self.n), counts)
                self._lags[l] = self.tgt[tgt_idx] - src[src_idx]
                self._tgt_idx[l] = tgt_idx
            else:
                self._lags[l] = np.empty(0)
                self._tgt_idx[l] = np.empty(0, dtype=int)
            interior = (src >= 0.0) & (src <= T - horizon)
            self._src_interior[l] = int(np.sum(interior))
            self._src_boundary[l] = src[~interior]
        self._bin_cache: dict = {}
        self._wvec_cache: dict = {}

    def bins(self, l: int, I: int) -> np.ndarray:
        key = (l, I)
        if key not in self._bin_cache:
            lags = self._lags[l]
            idx = np.ceil(lags * I / self.A).astype(int) - 1
            self._bin_cache[key] = np.clip(idx, 0, I - 1)
        return self._bin_cache[key]

    def contrib(self, l: int, heights: np.ndarray) -> np.ndarray:
        """Per-target-event intensity contribution of edge l."""
        I = heights.size
        if self._lags[l].size == 0:
            return np.zeros(self.n)
        return np.bincount(
            self._tgt_idx[l], weights=heights[self.bins(l, I)], minlength=self.n
        )

    def comp_weights(self, l: int, I: int) -> np.ndarray:
        """w[b] = total length of (s + t_b, s + t_{b+1}] cap [0, T] over source
        events s; <w, heights> is the edge's exact compensator term."""
        key = (l, I)
        if key not in self._wvec_cache:
            width = self.A / I
            w = np.full(I, self._src_interior[l] * width)
            s = self._src_boundary[l]
            if s.size:
                edges = np.linspace(0.0, self.A, I + 1)
                lo = np.clip(s[:, None] + edges[None, :-1], 0.0, self.T)
                hi = np.clip(s[:, None] + edges[None, 1:], 0.0, self.T)
                w += np.sum(hi - lo, axis=0)
            self._wvec_cache[key] = w
        return self._wvec_cache[key]

    def comp_edge(self, l: int, heights: np.ndarray) -> float:
        return float(np.dot(self.comp_weights(l, heights.size), heights))

    def log_lik(self, nu: float, lam_events: np.ndarray, comp: float) -> float:
        if self.n and np.any(lam_events <= 0.0):
            return NEG_INF
        s = float(np.sum(np.log(lam_events))) if self.n else 0.0
        return s - comp


def _heights(I: int, w: np.ndarray, A: float) -> np.ndarray:
    return w[1:] * I / A


def _log_dirichlet(w: np.ndarray, alpha: float) -> float:
    n = w.size
    if np.any(w <= 0.0):
        return NEG_INF
    return float(gammaln(n * alpha) - n * gammaln(alpha) + (alpha - 1.0) * np.sum(np.log(w)))


@dataclass
class ChainState:
    """Mutable RJ-MCMC state for one component."""

    k: int
    nu: float
    edges: dict  # l -> (I, w) with w on the (I+1)-simplex
    contribs: dict  # l -> per-target intensity contribution
    lam: np.ndarray  # per-target total intensity
    comp_edges: dict  # l -> compensator term
    log_lik: float
    log_prior: float
    iteration: int = 0
    accepted: dict = field(default_factory=lambda: {m: 0 for m in MOVES})
    proposed: dict = field(default_factory=lambda: {m: 0 for m in MOVES})
    max_audit_delta: float = 0.0

    def comp_total(self, T: float) -> float:
        return self.nu * T + sum(self.comp_edges.values())

    def to_params(self, A: float) -> ComponentParams:
        kernels = {
            l: HistogramKernel(A, _heights(I, w, A)) for l, (I, w) in self.edges.items()
        }
        return ComponentParams(nu=self.nu, kernels=kernels)


@dataclass(frozen=True)
class PosteriorSample:
    component: int
    draws: tuple  # thinned post-burn-in ComponentParams
    acceptance: dict
    proposed: dict
    max_audit_delta: float
    horizon: float


@dataclass(frozen=True)
class PosteriorSummary:
    component: int
    nu_hat: float
    rho_hat: np.ndarray  # per source l
    inclusion: np.ndarray
    grid: np.ndarray
    mean_kernels: np.ndarray  # (K, grid) posterior mean, absent edge = 0
    band_lo: np.ndarray
    band_hi: np.ndarray


class _Sampler:
    def __init__(
        self,
        k: int,
        events: EventData,
        priors: PriorSpecs,
        config: McmcConfig,
        seed,
        fixed_set=None,
    ):
        self.priors = priors
        self.config = config
        self.K = events.dimension
        self.A = priors.horizon
        self.T = events.t_end
        self.fixed_set = None if fixed_set is None else frozenset(int(l) for l in fixed_set)
        self.engine = LikelihoodEngine(events, k, self.T, self.A)
        self.rng = np.random.default_rng(seed)
        self.nu_scale = config.nu_scale
        self.heights_scale = config.heights_scale
        if self.fixed_set is None:
            self.move_probs = np.array(config.move_probs())
        else:
            # edge moves disabled; height/bin moves need an active set
            p = np.array(config.move_probs())
            p[3:] = 0.0
            if not self.fixed_set:
                p[1] = p[2] = 0.0
            if p.sum() == 0.0:
                raise ValueError("no moves available for the fixed-set chain")
            self.move_probs = p / p.sum()
        self.state = self._init_state(k)

    # --- state construction -------------------------------------------------

    def _init_state(self, k: int) -> ChainState:
        eng = self.engine
        nu = eng.n / self.T if (self.T > 0 and eng.n) else 1.0
        edges: dict = {}
        if self.fixed_set:
            for l in sorted(self.fixed_set):
                edges[l] = self._draw_kernel()
        contribs = {l: eng.contrib(l, _heights(I, w, self.A)) for l, (I, w) in edges.items()}
        lam = np.full(eng.n, nu)
        for cv in contribs.values():
            lam = lam + cv
        comp_edges = {
            l: eng.comp_edge(l, _heights(I, w, self.A)) for l, (I, w) in edges.items()
        }
        state = ChainState(
            k=k,
            nu=nu,
            edges=edges,
            contribs=contribs,
            lam=lam,
            comp_edges=comp_edges,
            log_lik=0.0,
            log_prior=0.0,
        )
        state.log_lik = eng.log_lik(nu, lam, state.comp_total(self.T))
        if state.log_lik == NEG_INF:
            raise RuntimeError("degenerate start: initial log-likelihood is -inf")
        state.log_prior = self._log_prior(state.nu, state.edges)
        return state

    def _draw_kernel(self):
        spec = self.priors.kernel
        I = spec.sample_bin_count(self.rng)
        w = self.rng.dirichlet(np.full(I + 1, spec.alpha))
        return (I, w)

    # --- densities ----------------------------------------------------------

    def _log_kernel_prior(self, I: int, w: np.ndarray) -> float:
        spec = self.priors.kernel
        pmf = spec.bin_count_pmf(I)
        if pmf == 0.0:
            return NEG_INF
        return math.log(pmf) + _log_dirichlet(w, spec.alpha)

    def _log_prior(self, nu: float, edges: dict) -> float:
        total = self.priors.nu.log_density(nu)
        for I, w in edges.values():
            total += self._log_kernel_prior(I, w)
        if self.fixed_set is None:
            s = len(edges)
            pmf = self.priors.size.pmf(s)
            if pmf == 0.0:
                return NEG_INF
            total += math.log(pmf) - log_binom(self.K, s)
        return total

    # --- moves --------------------------------------------------------------

    def _accept(self, name: str, log_alpha: float) -> bool:
        self.state.proposed[name] += 1
        if log_alpha >= 0.0 or math.log(self.rng.random()) < log_alpha:
            self.state.accepted[name] += 1
            return True
        return False

    def _apply_edge(self, l, kernel, contrib, comp, lam, log_lik):
        st = self.state
        if kernel is None:
            del st.edges[l]
            del st.contribs[l]
            del st.comp_edges[l]
        else:
            st.edges[l] = kernel
            st.contribs[l] = contrib
            st.comp_edges[l] = comp
        st.lam = lam
        st.log_lik = log_lik
        st.log_prior = self._log_prior(st.nu, st.edges)

    def move_update_nu(self):
        st, eng = self.state, self.engine
        z = self.rng.normal(0.0, self.nu_scale)
        nu_new = st.nu * math.exp(z)
        lam_new = st.lam + (nu_new - st.nu)
        comp_new = nu_new * self.T + sum(st.comp_edges.values())
        ll_new = eng.log_lik(nu_new, lam_new, comp_new)
        lp_new = self._log_prior(nu_new, st.edges)
        # log-scale random walk: Jacobian term log(nu'/nu)
        log_alpha = (ll_new - st.log_lik) + (lp_new - st.log_prior) + math.log(nu_new / st.nu)
        if self._accept("update_nu", log_alpha):
            st.nu, st.lam, st.log_lik, st.log_prior = nu_new, lam_new, ll_new, lp_new
            return True
        return False

    def move_update_heights(self, l: int):
        """Logistic-normal random walk on the full weight vector of edge l."""
        st, eng = self.state, self.engine
        I, w = st.edges[l]
        y = np.log(w[:-1]) - math.log(w[-1])
        y_new = y + self.rng.normal(0.0, self.heights_scale, I)
        m = max(float(np.max(y_new)), 0.0)
        e = np.exp(y_new - m)
        e_last = math.exp(-m)
        w_new = np.concatenate([e, [e_last]]) / (float(np.sum(e)) + e_last)
        h_new = _heights(I, w_new, self.A)
        contrib_new = eng.contrib(l, h_new)
        lam_new = st.lam - st.contribs[l] + contrib_new
        comp_new = eng.comp_edge(l, h_new)
        comp_total = st.comp_total(self.T) - st.comp_edges[l] + comp_new
        ll_new = eng.log_lik(st.nu, lam_new, comp_total)
        prior_delta = self._log_kernel_prior(I, w_new) - self._log_kernel_prior(I, w)
        # additive-logistic Jacobian: prod of all weights
        jac = float(np.sum(np.log(w_new)) - np.sum(np.log(w)))
        log_alpha = (ll_new - st.log_lik) + prior_delta + jac
        if self._accept("update_heights", log_alpha):
            self._apply_edge(l, (I, w_new), contrib_new, comp_new, lam_new, ll_new)
            return True
        return False

    def move_change_bins(self, l: int):
        st, eng = self.state, self.engine
        I, w = st.edges[l]
        spec = self.priors.kernel
        if self.rng.random() < 0.5:
            # split: bin j's weight cut by u ~ U(0,1); Jacobian w_bin
            if I + 1 > spec.I_max:
                st.proposed["change_bins"] += 1
                return False
            j = int(self.rng.integers(I))
            u = self.rng.random()
            wj = w[1 + j]
            w_new = np.concatenate([w[: 1 + j], [wj * u, wj * (1.0 - u)], w[2 + j :]])
            I_new = I + 1
            log_jac = math.log(wj)
        else:
            if I == 1:
                st.proposed["change_bins"] += 1
                return False
            j = int(self.rng.integers(I - 1))
            w_new = np.concatenate([w[: 1 + j], [w[1 + j] + w[2 + j]], w[3 + j :]])
            I_new = I - 1
            log_jac = -math.log(w_new[1 + j])
        # bin-choice and pair-choice proposal factors cancel (I choices each way)
        h_new = _heights(I_new, w_new, self.A)
        contrib_new = eng.contrib(l, h_new)
        lam_new = st.lam - st.contribs[l] + contrib_new
        comp_new = eng.comp_edge(l, h_new)
        comp_total = st.nu * self.T + sum(st.comp_edges.values()) - st.comp_edges[l] + comp_new
        ll_new = eng.log_lik(st.nu, lam_new, comp_total)
        prior_delta = self._log_kernel_prior(I_new, w_new) - self._log_kernel_prior(I, w)
        log_alpha = (ll_new - st.log_lik) + prior_delta + log_jac
        if self._accept("change_bins", log_alpha):
            self._apply_edge(l, (I_new, w_new), contrib_new, comp_new, lam_new, ll_new)
            return True
        return False

    def move_add_edge(self):
        st, eng = self.state, self.engine
        s = len(st.edges)
        if s >= min(self.K, self.priors.size.cap):
            st.proposed["add_edge"] += 1
            return False
        candidates = [l for l in range(self.K) if l not in st.edges]
        l = int(candidates[self.rng.integers(len(candidates))])
        I, w = self._draw_kernel()
        h = _heights(I, w, self.A)
        contrib = eng.contrib(l, h)
        lam_new = st.lam + contrib
        comp = eng.comp_edge(l, h)
        ll_new = eng.log_lik(st.nu, lam_new, st.comp_total(self.T) + comp)
        size = self.priors.size
        if size.pmf(s + 1) == 0.0:
            st.proposed["add_edge"] += 1
            return False
        # kernel prior cancels against the from-prior proposal; remaining terms:
        log_alpha = (
            (ll_new - st.log_lik)
            + math.log(size.pmf(s + 1)) - math.log(size.pmf(s))
            + log_binom(self.K, s) - log_binom(self.K, s + 1)
            + math.log(self.K - s) - math.log(s + 1)
            + math.log(self.config.p_remove_edge) - math.log(self.config.p_add_edge)
        )
        if self._accept("add_edge", log_alpha):
            self._apply_edge(l, (I, w), contrib, comp, lam_new, ll_new)
            return True
        return False

    def move_remove_edge(self):
        st, eng = self.state, self.engine
        s = len(st.edges)
        if s == 0:
            st.proposed["remove_edge"] += 1
            return False
        keys = sorted(st.edges)
        l = int(keys[self.rng.integers(s)])
        lam_new = st.lam - st.contribs[l]
        ll_new = eng.log_lik(st.nu, lam_new, st.comp_total(self.T) - st.comp_edges[l])
        size = self.priors.size
        if size.pmf(s - 1) == 0.0:
            st.proposed["remove_edge"] += 1
            return False
        log_alpha = (
            (ll_new - st.log_lik)
            + math.log(size.pmf(s - 1)) - math.log(size.pmf(s))
            + log_binom(self.K, s) - log_binom(self.K, s - 1)
            + math.log(s) - math.log(self.K - s + 1)
            + math.log(self.config.p_add_edge) - math.log(self.config.p_remove_edge)
        )
        if self._accept("remove_edge", log_alpha):
            self._apply_edge(l, None, None, None, lam_new, ll_new)
            return True
        return False

    def move_swap_edge(self):
        st, eng = self.state, self.engine
        s = len(st.edges)
        if s == 0 or s == self.K:
            st.proposed["swap_edge"] += 1
            return False
        keys = sorted(st.edges)
        l_out = int(keys[self.rng.integers(s)])
        candidates = [l for l in range(self.K) if l not in st.edges]
        l_in = int(candidates[self.rng.integers(len(candidates))])
        I, w = self._draw_kernel()
        h = _heights(I, w, self.A)
        contrib_in = eng.contrib(l_in, h)
        comp_in = eng.comp_edge(l_in, h)
        lam_new = st.lam - st.contribs[l_out] + contrib_in
        comp_total = st.comp_total(self.T) - st.comp_edges[l_out] + comp_in
        ll_new = eng.log_lik(st.nu, lam_new, comp_total)
        # both kernels proposed from the prior: everything but the likelihood cancels
        log_alpha = ll_new - st.log_lik
        if self._accept("swap_edge", log_alpha):
            old = (st.edges[l_out], st.contribs[l_out], st.comp_edges[l_out])
            del st.edges[l_out], st.contribs[l_out], st.comp_edges[l_out]
            st.edges[l_in] = (I, w)
            st.contribs[l_in] = contrib_in
            st.comp_edges[l_in] = comp_in
            st.lam = lam_new
            st.log_lik = ll_new
            st.log_prior = self._log_prior(st.nu, st.edges)
            return True
        return False

    # --- audits and the main loop -------------------------------------------

    def audit(self):
        st, eng = self.state, self.engine
        lam = np.full(eng.n, st.nu)
        comp = st.nu * self.T
        for l, (I, w) in st.edges.items():
            h = _heights(I, w, self.A)
            lam = lam + eng.contrib(l, h)
            comp += eng.comp_edge(l, h)
        ll = eng.log_lik(st.nu, lam, comp)
        lp = self._log_prior(st.nu, st.edges)
        delta = max(abs(ll - st.log_lik), abs(lp - st.log_prior))
        st.max_audit_delta = max(st.max_audit_delta, delta)
        if delta > self.config.audit_tol:
            raise NumericalError(
                f"cache audit failed at iteration {st.iteration}: delta {delta}"
            )
        st.log_lik, st.log_prior, st.lam = ll, lp, lam

    def _adapt(self, window_acc: dict, window_prop: dict):
        for name, scale_attr in (("update_nu", "nu_scale"), ("update_heights", "heights_scale")):
            prop = window_prop[name]
            if prop >= 10:
                rate = window_acc[name] / prop
                scale = getattr(self, scale_attr) * math.exp(0.5 * (rate - 0.3))
                setattr(self, scale_attr, min(max(scale, 1e-3), 10.0))

    def step(self):
        st = self.state
        move = MOVES[int(self.rng.choice(6, p=self.move_probs))]
        if move == "update_nu":
            self.move_update_nu()
        elif move == "update_heights":
            if st.edges:
                keys = sorted(st.edges)
                self.move_update_heights(int(keys[self.rng.integers(len(keys))]))
            else:
                st.proposed["update_heights"] += 1
        elif move == "change_bins":
            if st.edges:
                keys = sorted(st.edges)
                self.move_change_bins(int(keys[self.rng.integers(len(keys))]))
            else:
                st.proposed["change_bins"] += 1
        elif move == "add_edge":
            self.move_add_edge()
        elif move == "remove_edge":
            self.move_remove_edge()
        else:
            self.move_swap_edge()
        st.iteration += 1

    def run(self) -> PosteriorSample:
        cfg = self.config
        st = self.state
        draws = []
        last_acc = dict(st.accepted)
        last_prop = dict(st.proposed)
        for it in range(1, cfg.iterations + 1):
            self.step()
            if cfg.adapt and it <= cfg.burn_in and it % 200 == 0:
                window_acc = {m: st.accepted[m] - last_acc[m] for m in MOVES}
                window_prop = {m: st.proposed[m] - last_prop[m] for m in MOVES}
                self._adapt(window_acc, window_prop)
                last_acc, last_prop = dict(st.accepted), dict(st.proposed)
            if it % cfg.audit_every == 0:
                self.audit()
            if it > cfg.burn_in and (it - cfg.burn_in) % cfg.thinning == 0:
                draws.append(st.to_params(self.A))
        acc = {
            m: (st.accepted[m] / st.proposed[m] if st.proposed[m] else 0.0) for m in MOVES
        }
        return PosteriorSample(
            component=st.k,
            draws=tuple(draws),
            acceptance=acc,
            proposed=dict(st.proposed),
            max_audit_delta=st.max_audit_delta,
            horizon=self.A,
        )


def run_chain(
    k: int,
    events: EventData,
    priors: PriorSpecs,
    config: McmcConfig,
    seed,
    fixed_set=None,
) -> PosteriorSample:
    """Run one RJ-MCMC chain for component k and return thinned draws.

    ``fixed_set`` freezes the active set (edge moves disabled), as used by the
    two-step refit.
    """
    return _Sampler(k, events, priors, config, seed, fixed_set=fixed_set).run()


def summarize(sample: PosteriorSample, K: int, grid_points: int = 256) -> PosteriorSummary:
    """Posterior mean masses, inclusion probabilities and mean kernels."""
    draws = sample.draws
    if not draws:
        raise ValueError("no post-burn-in draws to summarize")
    A = sample.horizon
    grid = (np.arange(grid_points) + 0.5) * A / grid_points
    n = len(draws)
    rho_hat = np.zeros(K)
    inclusion = np.zeros(K)
    kern_vals = np.zeros((K, n, grid_points))
    nus = np.empty(n)
    for i, d in enumerate(draws):
        nus[i] = d.nu
        for l, kern in d.kernels.items():
            rho_hat[l] += kern.mass
            inclusion[l] += 1.0
            kern_vals[l, i] = kern(grid)
    rho_hat /= n
    inclusion /= n
    return PosteriorSummary(
        component=sample.component,
        nu_hat=float(np.mean(nus)),
        rho_hat=rho_hat,
        inclusion=inclusion,
        grid=grid,
        mean_kernels=kern_vals.mean(axis=1),
        band_lo=np.quantile(kern_vals, 0.05, axis=1),
        band_hi=np.quantile(kern_vals, 0.95, axis=1),
    )
