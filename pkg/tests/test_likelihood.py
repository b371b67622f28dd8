import math

import numpy as np
import pytest

from sparsehawkes.events import EventData
from sparsehawkes.kernels import HistogramKernel, SplineKernel
from sparsehawkes.likelihood import (
    UnsupportedRepresentationError,
    build_piecewise_intensity,
    compensator,
    log_likelihood,
)
from sparsehawkes.model import intensity_at
from sparsehawkes.params import ComponentParams, NetworkParams


def _ev(times, K=1, t_start=-1.0, t_end=10.0):
    return EventData(K, t_start, t_end, tuple(np.asarray(t, float) for t in times))


def _random_instance(rng, K=3, max_events=50, A=1.0, T=5.0):
    comps_times = []
    for _ in range(K):
        n = int(rng.integers(0, max_events // K + 1))
        comps_times.append(np.sort(rng.uniform(-A, T, n)))
    ev = EventData(K, -A, T, tuple(comps_times))
    kernels = {}
    for l in range(K):
        if rng.random() < 0.7:
            I = int(rng.integers(1, 5))
            kernels[l] = HistogramKernel(A, rng.random(I) * 0.8)
    f_k = ComponentParams(float(rng.uniform(0.2, 2.0)), kernels)
    return f_k, ev


class TestBuildPiecewise:
    def test_no_events(self):
        f = ComponentParams(1.3, {0: HistogramKernel(1.0, np.array([0.5]))})
        pw = build_piecewise_intensity(f, _ev([[]]), 2.0)
        np.testing.assert_array_equal(pw.breakpoints, [0.0, 2.0])
        np.testing.assert_array_equal(pw.rates, [1.3])

    def test_hand_construction(self):
        f = ComponentParams(1.0, {0: HistogramKernel(1.0, np.array([0.5]))})
        pw = build_piecewise_intensity(f, _ev([[0.5]]), 2.0)
        np.testing.assert_allclose(pw.breakpoints, [0.0, 0.5, 1.5, 2.0])
        np.testing.assert_allclose(pw.rates, [1.0, 1.5, 1.0])

    def test_segment_rates_match_intensity_at_midpoints(self):
        rng = np.random.default_rng(21)
        for _ in range(100):
            f_k, ev = _random_instance(rng)
            pw = build_piecewise_intensity(f_k, ev, 5.0)
            mids = (pw.breakpoints[:-1] + pw.breakpoints[1:]) / 2.0
            for m, r in zip(mids, pw.rates):
                assert r == pytest.approx(intensity_at(f_k, ev, m), abs=1e-10)

    def test_spline_unsupported(self):
        f = ComponentParams(
            1.0, {0: SplineKernel(1.0, 2, np.array([-1.0, -1.0, -1.0]))}
        )
        with pytest.raises(UnsupportedRepresentationError):
            build_piecewise_intensity(f, _ev([[0.5]]), 2.0)


class TestLogLikelihood:
    def test_poisson_closed_form(self):
        f = ComponentParams(2.0, {})
        times = np.sort(np.random.default_rng(1).uniform(0, 10, 7))
        ll = log_likelihood(f, _ev([times], t_end=10.0), 10.0)
        assert ll == pytest.approx(7 * math.log(2.0) - 20.0, abs=1e-12)

    def test_hand_instance(self):
        # spec example: events {0.5, 1.2}, one bin height 0.5, nu=1, T=2
        f = ComponentParams(1.0, {0: HistogramKernel(1.0, np.array([0.5]))})
        ev = _ev([[0.5, 1.2]], t_end=2.0)
        # lam(0.5-)=1, lam(1.2-)=1.5; compensator 2 + 0.5 + 0.5*0.8 = 2.9
        expect = math.log(1.0) + math.log(1.5) - 2.9
        assert log_likelihood(f, ev, 2.0) == pytest.approx(expect, abs=1e-12)

    def test_inactive_components_irrelevant(self):
        rng = np.random.default_rng(22)
        f_k, ev = _random_instance(rng, K=3)
        inactive = [l for l in range(3) if l not in f_k.kernels and l != 0]
        if not inactive:
            f_k = ComponentParams(f_k.nu, {0: f_k.kernels.get(0, HistogramKernel(1.0, np.array([0.1])))})
            inactive = [1, 2]
        stripped = tuple(
            np.empty(0) if l in inactive and l != 0 else ev.times[l] for l in range(3)
        )
        ev2 = EventData(3, ev.t_start, ev.t_end, stripped)
        assert log_likelihood(f_k, ev, 5.0, 0) == log_likelihood(f_k, ev2, 5.0, 0)

    def test_zero_height_kernel_noop(self):
        rng = np.random.default_rng(23)
        ev = _ev([np.sort(rng.uniform(-1, 5, 20)), np.sort(rng.uniform(-1, 5, 15))], K=2)
        f_k = ComponentParams(1.2, {0: HistogramKernel(1.0, np.array([0.4, 0.2]))})
        base = log_likelihood(f_k, ev, 5.0, 0)
        kernels = dict(f_k.kernels)
        kernels[1] = HistogramKernel(1.0, np.zeros(3))
        f2 = ComponentParams(f_k.nu, kernels)  # zero-mass kernel is pruned
        assert log_likelihood(f2, ev, 5.0, 0) == pytest.approx(base, abs=1e-14)

    def test_spline_path_vs_riemann(self):
        k = SplineKernel(1.0, 2, np.array([-1.0, -0.5, -1.5]))
        f = ComponentParams(0.8, {0: k})
        ev = _ev([[0.3, 0.9, 1.4, 2.2]], t_end=4.0)
        ll = log_likelihood(f, ev, 4.0)
        # Riemann oracle for the compensator
        ts = np.linspace(0, 4.0, 200_001)[1:]  # right endpoints
        lam = np.array([intensity_at(f, ev, t) for t in ts[::40]])
        # coarse midpoint oracle at 5000 points, tolerance loose
        mids = (np.linspace(0, 4.0, 5001)[:-1] + np.linspace(0, 4.0, 5001)[1:]) / 2
        lam_m = np.array([intensity_at(f, ev, t) for t in mids])
        comp_oracle = float(np.sum(lam_m) * (4.0 / 5000))
        comp = compensator(f, ev, 4.0)
        assert comp == pytest.approx(comp_oracle, abs=1e-3)
        lam_events = [intensity_at(f, ev, t) for t in [0.3, 0.9, 1.4, 2.2]]
        assert ll == pytest.approx(sum(math.log(x) for x in lam_events) - comp, abs=1e-9)


class TestCompensator:
    def test_constant(self):
        f = ComponentParams(1.0, {})
        assert compensator(f, _ev([[]], t_end=5.0), 5.0) == pytest.approx(5.0, abs=0)

    def test_additivity(self):
        rng = np.random.default_rng(31)
        for _ in range(30):
            f_k, ev = _random_instance(rng)
            T = 5.0
            t = T / 3.0
            whole = compensator(f_k, ev, T)
            left = compensator(f_k, ev, t)
            pw = build_piecewise_intensity(f_k, ev, T)
            # right part = whole integral minus left integral on the same partition
            assert abs(whole - left - (whole - left)) <= 1e-12
            # direct check: integral over [0,t] + [t,T] via the breakpoint sweep
            bks = pw.breakpoints
            rates = pw.rates
            cut = np.clip(bks, None, t)
            left_sweep = float(np.sum(np.diff(cut) * rates))
            assert left == pytest.approx(left_sweep, abs=1e-12)

    def test_per_event_closed_form(self):
        rng = np.random.default_rng(32)
        for _ in range(50):
            f_k, ev = _random_instance(rng)
            T = 5.0
            oracle = f_k.nu * T
            for l, kern in f_k.kernels.items():
                edges = kern.grid
                h = kern.heights
                for s in ev.times[l]:
                    lo = np.clip(s + edges[:-1], 0.0, T)
                    hi = np.clip(s + edges[1:], 0.0, T)
                    oracle += float(np.sum((hi - lo) * h))
            assert compensator(f_k, ev, T) == pytest.approx(oracle, abs=1e-12)

    def test_ge_nu_T(self):
        rng = np.random.default_rng(33)
        for _ in range(20):
            f_k, ev = _random_instance(rng)
            assert compensator(f_k, ev, 5.0) >= f_k.nu * 5.0 - 1e-12
