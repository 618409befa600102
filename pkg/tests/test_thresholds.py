from __future__ import annotations

import csv
import io

import numpy as np
import pytest

from qalandscape.potential import LandscapeSet, find_minima
from qalandscape.problem import make_problem
from qalandscape.thresholds import (CSV_COLUMNS, Envelope, ThresholdReport, _upper_hull,
                                    bridging_segment, envelope, find_bifurcation,
                                    minimizer_trajectory, threshold_from_indicator, to_csv,
                                    uniform_energy)

N_EPS = 120


@pytest.fixture(scope="module")
def k4():
    return make_problem("one-in-k", 4)


@pytest.fixture(scope="module")
def bif4(k4):
    return find_bifurcation(k4, 0.685, "full", N_EPS, branches=False)


def test_upper_hull_of_concave_and_dented():
    x = np.linspace(0, 1, 11)
    assert _upper_hull(x, -(x - 0.5) ** 2) == list(range(11))
    y = -(x - 0.5) ** 2
    y[4:7] -= 0.1
    hull = _upper_hull(x, y)
    assert 5 not in hull and hull[0] == 0 and hull[-1] == 10


def test_bridging_segment_synthetic():
    x = np.linspace(0, 1, 21)
    flat = Envelope(x, 1 - x**2, [None] * 21)
    assert bridging_segment(flat) is None
    dent = Envelope(x, 1 - x**2 - 0.05 * np.exp(-((x - 0.5) / 0.05) ** 2), [None] * 21)
    a, b, gap = bridging_segment(dent)
    assert a < 10 < b and gap > 0.01


def test_envelope_ends_at_uniform(k4):
    env = envelope(k4, 0.6, "full", 60)
    assert env.eps[-1] == pytest.approx(uniform_energy(k4, 0.6))
    assert env.ell[-1] == pytest.approx(1.0, abs=1e-8)
    assert np.all((env.ell > 0) & (env.ell <= 1 + 1e-12))
    # ell* grows toward the uniform energy
    assert np.all(np.diff(env.ell) > -1e-10)


def test_no_bifurcation_k3():
    spec = make_problem("one-in-k", 3)
    assert find_bifurcation(spec, 0.7, "full", N_EPS) is None
    assert envelope(spec, 0.7, "full", N_EPS).indicator() < 0


def test_bifurcation_k4(k4, bif4):
    assert bif4 is not None
    assert bif4.separation > 1e-3
    assert bif4.low.f == pytest.approx(bif4.high.f, abs=1e-10)
    assert bif4.tau_star == pytest.approx(1 / (1 + bif4.Gamma_star))
    # the low-field minimum sits at lower energy
    assert bif4.low.energy < bif4.high.energy and bif4.low.ell < bif4.high.ell


def test_bifurcation_minima_are_global(k4, bif4):
    pts = find_minima(k4, 0.685, bif4.Gamma_star)
    assert pts[0].f >= bif4.low.f - 1e-8


def test_bifurcation_deterministic(k4, bif4):
    again = find_bifurcation(k4, 0.685, "full", N_EPS, branches=False)
    assert again.Gamma_star == bif4.Gamma_star
    assert again.low.state.q == bif4.low.state.q


def test_branches_cover_both_sides(k4):
    bif = find_bifurcation(k4, 0.685, "full", N_EPS, branches=True)
    lo = [p.Gamma for p in bif.branch_low]
    hi = [p.Gamma for p in bif.branch_high]
    assert min(lo) < bif.Gamma_star < max(hi)
    assert lo == sorted(lo, reverse=True)


def test_trajectory_jumps_only_with_bifurcation(k4, bif4):
    tr = minimizer_trajectory(k4, 0.685, "full", n_eps=N_EPS)
    ratio, i = tr.jump_ratio(tr.q)
    assert ratio > 10
    assert tr.tau[i] <= bif4.tau_star + 0.005 and tr.tau[i + 1] >= bif4.tau_star - 0.005
    tr3 = minimizer_trajectory(make_problem("one-in-k", 3), 0.7, "full", n_eps=N_EPS)
    assert tr3.jump_ratio(tr3.q)[0] < 5


def test_threshold_from_indicator():
    assert threshold_from_indicator(lambda g: g - 0.3, 0.8, 1e-10) == pytest.approx(0.3)
    assert threshold_from_indicator(lambda g: -1.0, 0.8, 1e-10) is None


def test_dynamic_below_static_energy_only(k4):
    from qalandscape.entropy import static_threshold
    from qalandscape.thresholds import dynamic_threshold
    spec = make_problem("one-in-k", 5)
    gc = static_threshold(spec)
    gd = dynamic_threshold(spec, "energy-only", gc, tol=1e-3, n_eps=N_EPS)
    assert gd is not None and gd < gc


def test_csv_columns():
    spec = make_problem("one-in-k", 3)
    reps = [ThresholdReport(spec, LandscapeSet.FULL, None, 0.8049),
            ThresholdReport(make_problem("k-nae", 6), LandscapeSet.ENERGY_ONLY, 19.7, 21.8, 1.2, 0.45)]
    text = to_csv(reps, {"n_eps": 300})
    rows = list(csv.DictReader(io.StringIO(text)))
    assert list(rows[0]) == CSV_COLUMNS + ["n_eps"]
    assert rows[0]["gamma_d"] == "" and rows[0]["problem"] == "one-in-k"
    assert rows[1]["landscape_set"] == "energy-only" and float(rows[1]["tau_star"]) == 0.45
    assert to_csv(reps, {"n_eps": 300}) == text
