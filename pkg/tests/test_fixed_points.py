"""Fixed-point location, stability labels, region sweeps, and the
critical weight of the 1 -> 3 transition."""

import itertools
import math

import numpy as np
import pytest

from rnnlab.fixed_points import (ActivationParams, Kind, Stability,
                                 count_fixed_points, count_region_sweep,
                                 critical_weight, find_fixed_points,
                                 iterate_to_fixed_point)


def report(kind, w, b):
    return find_fixed_points(ActivationParams(kind, w, b))


def test_tanh_identity_map_marginal_at_zero():
    r = report(Kind.TANH, 1.0, 0.0)
    assert r.count == 1
    p = r.points[0]
    assert abs(p.xi) < 1e-6
    assert p.stability is Stability.MARGINAL


def test_tanh_tristable_cell():
    r = report(Kind.TANH, 13.0, -6.0)
    assert r.count == 3
    assert [p.stability for p in r.points] == [
        Stability.STABLE, Stability.UNSTABLE, Stability.STABLE]
    xs = [p.xi for p in r.points]
    assert xs == sorted(xs)
    a = ActivationParams(Kind.TANH, 13.0, -6.0)
    for p in r.points:
        assert abs(a(p.xi) - p.xi) < 1e-10


def test_tanh_monostable_cell():
    assert report(Kind.TANH, 5.0, -6.0).count == 1


def test_sigmoid_constant_map():
    r = report(Kind.SIGMOID, 0.0, 0.0)
    assert r.count == 1
    assert r.points[0].xi == pytest.approx(0.5, abs=1e-10)
    assert r.points[0].derivative_magnitude == pytest.approx(0.0, abs=1e-9)
    assert r.points[0].stability is Stability.STABLE


def test_contraction_always_one_point():
    for b in (-8.0, -2.0, 0.0, 3.0):
        for kind in Kind:
            assert count_fixed_points(kind, 0.5, b) == 1


def test_roots_match_dense_grid_oracle():
    # independent check: count sign changes of f(x)-x on a 10^6 grid
    for kind, w, b in [(Kind.TANH, 13, -6), (Kind.TANH, 5, -6),
                       (Kind.SIGMOID, 13, -6.5), (Kind.SIGMOID, 3, -1.5),
                       (Kind.TANH, 2, 0.0)]:
        a = ActivationParams(kind, float(w), float(b))
        xs = np.linspace(-1.6, 1.6, 1_000_001)
        s = np.sign(np.asarray(a(xs) - xs))
        # run-length encode the sign sequence: each zero run is a root the
        # grid hit exactly; each direct +/- adjacency is one crossing
        runs = [k for k, _ in itertools.groupby(s)]
        roots = runs.count(0.0)
        roots += sum(1 for p, q in zip(runs, runs[1:]) if p * q < 0)
        assert find_fixed_points(a).count == roots, (kind, w, b)


def test_region_sweep_shape_and_fig_rows():
    bs = np.arange(-8.0, -3.99, 0.5)
    grid = count_region_sweep(Kind.TANH, [5.0, 13.0], bs)
    assert grid.shape == (2, len(bs))
    assert np.all(grid[0] == 1)   # w=5 row
    assert np.all(grid[1] == 3)   # w=13 row


def test_critical_weight_brackets():
    wc = critical_weight(Kind.TANH, -6.0)
    assert 5.0 < wc < 13.0
    assert count_fixed_points(Kind.TANH, wc - 0.01, -6.0) == 1
    assert count_fixed_points(Kind.TANH, wc + 0.01, -6.0) == 3


def test_critical_weight_tanh_origin_tangency():
    # at b=0 the transition is the tangency w*sech^2(0) = 1
    assert critical_weight(Kind.TANH, 0.0) == pytest.approx(1.0, abs=1e-3)


def test_critical_weight_infinite_when_unreachable():
    # strongly positive b keeps sigmoid pinned near 1: no triple regime
    assert critical_weight(Kind.SIGMOID, 50.0) == math.inf


def test_iteration_converges_to_stable_point():
    a = ActivationParams(Kind.TANH, 13.0, -6.0)
    pts = find_fixed_points(a).points
    lo, mid, hi = (p.xi for p in pts)
    x, _, ok = iterate_to_fixed_point(a, hi + 0.01)
    assert ok and abs(x - hi) < 1e-9
    # just above the unstable point the flow escapes upward to xi+
    x, _, ok = iterate_to_fixed_point(a, mid + 1e-6)
    assert ok and abs(x - hi) < 1e-9
    x, _, ok = iterate_to_fixed_point(a, mid - 1e-6)
    assert ok and abs(x - lo) < 1e-9


def test_exact_fixed_point_stays_put():
    a = ActivationParams(Kind.SIGMOID, 13.0, -6.5)
    for p in find_fixed_points(a).points:
        x = p.xi
        for _ in range(100):
            x = float(a(x))
        assert abs(x - p.xi) < 1e-10 or p.stability is Stability.UNSTABLE


def test_stability_thresholds_respect_band():
    for kind, w, b in [(Kind.TANH, 13, -6), (Kind.SIGMOID, 13, -6.5)]:
        for p in report(kind, float(w), float(b)).points:
            if p.stability is Stability.STABLE:
                assert p.derivative_magnitude < 1 - 1e-8
            elif p.stability is Stability.UNSTABLE:
                assert p.derivative_magnitude > 1 + 1e-8
