import numpy as np
import pytest

from sparsehawkes.events import EventData
from sparsehawkes.kernels import HistogramKernel
from sparsehawkes.likelihood import build_piecewise_intensity
from sparsehawkes.losses import (
    LossReport,
    graph_metrics,
    intensity_distance,
    intensity_distance_all,
    l1_distance,
    l1_distance_network,
)
from sparsehawkes.params import ComponentParams, NetworkParams
from sparsehawkes.simulate import simulate_cluster


def _hk(*heights):
    return HistogramKernel(1.0, np.array(heights, dtype=float))


def _net1(nu, kernels):
    return NetworkParams(1, (ComponentParams(nu, kernels),), 1.0)


def _net2(c0, c1):
    return NetworkParams(2, (c0, c1), 1.0)


def _riemann_d1T(f, g, events, T, k, n=400_000):
    lf = build_piecewise_intensity(f.components[k], events, T, k)
    lg = build_piecewise_intensity(g.components[k], events, T, k)

    def at(pw, t):
        i = np.searchsorted(np.asarray(pw.breakpoints), t, side="right") - 1
        return np.asarray(pw.rates)[np.clip(i, 0, len(pw.rates) - 1)]

    ts = (np.arange(n) + 0.5) * (T / n)
    return float(np.mean(np.abs(at(lf, ts) - at(lg, ts))))


def _random_events(rng, K=2, n=30, T=5.0, A=1.0):
    times = tuple(np.sort(rng.uniform(0, T, rng.integers(5, n))) for _ in range(K))
    return EventData(K, -A, T, times)


class TestIntensityDistance:
    def test_identical_is_zero(self):
        rng = np.random.default_rng(0)
        ev = _random_events(rng)
        f = _net2(
            ComponentParams(1.0, {0: _hk(0.5, 0.2), 1: _hk(0.3)}),
            ComponentParams(0.7, {}),
        )
        assert intensity_distance(f, f, ev, ev.t_end, 0) == 0.0

    def test_no_events_is_nu_gap(self):
        ev = EventData(2, -1.0, 10.0, (np.empty(0), np.empty(0)))
        f = _net2(ComponentParams(1.4, {0: _hk(0.5)}), ComponentParams(1.0, {}))
        g = _net2(ComponentParams(0.9, {1: _hk(0.2, 0.1)}), ComponentParams(1.0, {}))
        assert intensity_distance(f, g, ev, 10.0, 0) == pytest.approx(0.5, abs=1e-15)

    def test_matches_riemann_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            ev = _random_events(rng)
            f = _net2(
                ComponentParams(
                    float(rng.uniform(0.5, 2.0)),
                    {0: _hk(*rng.uniform(0.01, 0.4, 3)), 1: _hk(*rng.uniform(0.01, 0.4, 2))},
                ),
                ComponentParams(1.0, {}),
            )
            g = _net2(
                ComponentParams(
                    float(rng.uniform(0.5, 2.0)), {0: _hk(*rng.uniform(0.01, 0.4, 2))}
                ),
                ComponentParams(1.0, {}),
            )
            exact = intensity_distance(f, g, ev, ev.t_end, 0)
            approx = _riemann_d1T(f, g, ev, ev.t_end, 0)
            assert exact == pytest.approx(approx, abs=2e-4)

    def test_triangle_inequality(self):
        rng = np.random.default_rng(11)
        ev = _random_events(rng)
        nets = [
            _net2(
                ComponentParams(
                    float(rng.uniform(0.5, 2.0)), {0: _hk(*rng.uniform(0.01, 0.4, 2))}
                ),
                ComponentParams(1.0, {}),
            )
            for _ in range(3)
        ]
        d01 = intensity_distance(nets[0], nets[1], ev, ev.t_end, 0)
        d12 = intensity_distance(nets[1], nets[2], ev, ev.t_end, 0)
        d02 = intensity_distance(nets[0], nets[2], ev, ev.t_end, 0)
        assert d02 <= d01 + d12 + 1e-12

    def test_domination_bound(self):
        # d1T <= |dnu| + sum_l (sup-norm-free) int|dh_l| * N^l[-A, T) / T
        rng = np.random.default_rng(13)
        ev = _random_events(rng)
        T, A = ev.t_end, 1.0
        fc = ComponentParams(1.2, {0: _hk(0.5, 0.1), 1: _hk(0.3)})
        gc = ComponentParams(0.8, {0: _hk(0.2, 0.2)})
        f = _net2(fc, ComponentParams(1.0, {}))
        g = _net2(gc, ComponentParams(1.0, {}))
        d = intensity_distance(f, g, ev, T, 0)
        rep = l1_distance(fc, gc, 0)
        per_edge = {
            0: 0.5 * (abs(0.5 - 0.2) + abs(0.1 - 0.2)),
            1: 0.3,
        }
        bound = rep.l1_nu + sum(
            per_edge[l] * ev.count_in(l, -A, T) / T for l in range(2)
        )
        assert d <= bound + 1e-12

    def test_nu_scale_equivariance(self):
        rng = np.random.default_rng(17)
        ev = _random_events(rng)
        f = _net2(ComponentParams(1.0, {}), ComponentParams(1.0, {}))
        g = _net2(ComponentParams(1.5, {}), ComponentParams(1.0, {}))
        h = _net2(ComponentParams(2.0, {}), ComponentParams(1.0, {}))
        d_fg = intensity_distance(f, g, ev, ev.t_end, 0)
        d_fh = intensity_distance(f, h, ev, ev.t_end, 0)
        assert d_fh == pytest.approx(2 * d_fg, rel=1e-12)

    def test_all_components(self):
        rng = np.random.default_rng(19)
        ev = _random_events(rng)
        f = _net2(ComponentParams(1.0, {0: _hk(0.4)}), ComponentParams(0.8, {}))
        g = _net2(ComponentParams(1.1, {}), ComponentParams(0.8, {}))
        ds = intensity_distance_all(f, g, ev, ev.t_end)
        assert len(ds) == 2
        assert ds[0] == pytest.approx(intensity_distance(f, g, ev, ev.t_end, 0))
        assert ds[1] == 0.0

    def test_rejects_nonpositive_T(self):
        ev = EventData(1, -1.0, 1.0, (np.empty(0),))
        f = _net1(1.0, {})
        with pytest.raises(ValueError):
            intensity_distance(f, f, ev, 0.0, 0)


class TestL1Distance:
    def test_single_bin_example(self):
        f = ComponentParams(1.0, {0: _hk(0.5)})
        g = ComponentParams(1.0, {0: _hk(0.2)})
        rep = l1_distance(f, g, 0)
        assert isinstance(rep, LossReport)
        assert rep.l1_nu == 0.0
        assert rep.l1_active == pytest.approx(0.3, abs=1e-15)
        assert rep.l1_false_mass == 0.0
        assert rep.total == pytest.approx(0.3, abs=1e-15)

    def test_mismatched_grids(self):
        # f has bins (0.6, 0.2) on halves of [0,1], g one flat bin at 0.4
        f = ComponentParams(1.0, {0: _hk(0.6, 0.2)})
        g = ComponentParams(1.0, {0: _hk(0.4)})
        rep = l1_distance(f, g, 0)
        assert rep.l1_active == pytest.approx(0.5 * 0.2 + 0.5 * 0.2, abs=1e-14)

    def test_false_mass_and_decomposition(self):
        f = ComponentParams(1.3, {0: _hk(0.5), 1: _hk(0.2, 0.1)})
        g = ComponentParams(1.0, {0: _hk(0.3)})
        rep = l1_distance(f, g, 0)
        assert rep.l1_nu == pytest.approx(0.3, abs=1e-15)
        # edge 1 is active only in f: its full mass (0.15) counts as false mass
        assert rep.l1_false_mass == pytest.approx(0.15, abs=1e-14)
        assert rep.l1_active == pytest.approx(0.2, abs=1e-14)
        assert rep.total == pytest.approx(rep.l1_nu + rep.l1_false_mass + rep.l1_active)

    def test_symmetry(self):
        f = ComponentParams(1.3, {0: _hk(0.5), 1: _hk(0.2, 0.1)})
        g = ComponentParams(1.0, {0: _hk(0.3), 2: _hk(0.4)})
        assert l1_distance(f, g, 0).total == pytest.approx(l1_distance(g, f, 0).total)

    def test_network_sums_components(self):
        f = _net2(ComponentParams(1.0, {0: _hk(0.4)}), ComponentParams(0.5, {}))
        g = _net2(ComponentParams(1.2, {}), ComponentParams(0.5, {}))
        total = l1_distance_network(f, g)
        assert total == pytest.approx(
            l1_distance(f.components[0], g.components[0], 0).total
        )


class TestGraphMetrics:
    def test_exact_match(self):
        m = graph_metrics({0, 2}, {0, 2})
        assert (m.true_positives, m.false_positives, m.false_negatives) == (2, 0, 0)
        assert m.precision == 1.0 and m.recall == 1.0 and m.exact

    def test_partial(self):
        m = graph_metrics({0, 1}, {1, 2})
        assert (m.true_positives, m.false_positives, m.false_negatives) == (1, 1, 1)
        assert m.precision == 0.5 and m.recall == 0.5 and not m.exact

    def test_empty_estimate_precision_one(self):
        m = graph_metrics(set(), {3})
        assert m.precision == 1.0 and m.recall == 0.0 and not m.exact

    def test_both_empty_exact(self):
        m = graph_metrics(set(), set())
        assert m.exact and m.precision == 1.0 and m.recall == 1.0


class TestOnSimulatedData:
    def test_truth_vs_perturbed(self):
        truth = _net1(1.0, {0: _hk(0.5, 0.3)})
        ev, _ = simulate_cluster(truth, 200.0, 5)
        near = _net1(1.01, {0: _hk(0.49, 0.31)})
        far = _net1(2.0, {})
        d_near = intensity_distance(near, truth, ev, 200.0, 0)
        d_far = intensity_distance(far, truth, ev, 200.0, 0)
        assert d_near < d_far
        assert d_near < 0.1
