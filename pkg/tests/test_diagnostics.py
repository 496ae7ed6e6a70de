import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hvlab.core import AccuracyWarning, SpatialGrid
from hvlab.diagnostics import (
    CheckpointRecord,
    MonitorSample,
    SweepReport,
    assumption9_monitor,
    dyadic_radii,
    duhamel_monitor,
    hl_maximal,
    hl_maximal_bruteforce,
    lemma3_check,
    scaling_fit,
)
from hvlab.quantum import DensityMatrix, gaussian_kernel_state


def test_dyadic_radii():
    g = SpatialGrid(8.0, 16)
    assert dyadic_radii(g) == [0.0, 0.5, 1.0, 2.0, 4.0]


def test_maximal_of_constant():
    g = SpatialGrid(6.0, 12, 2)
    assert np.allclose(hl_maximal(np.full(g.shape, 2.5), g), 2.5)


@pytest.mark.parametrize("dim, n", [(1, 32), (2, 12), (3, 8)])
def test_maximal_spike_equals_bruteforce(dim, n):
    g = SpatialGrid(4.0, n, dim)
    f = np.zeros(g.shape)
    f[(1,) * dim] = 1.0
    assert np.array_equal(hl_maximal(f, g), hl_maximal_bruteforce(f, g))


def test_maximal_spike_closed_form():
    g = SpatialGrid(8.0, 16)
    f = np.zeros(16)
    f[5] = 1.0
    out = hl_maximal(f, g)
    # node 6 sees the spike first in the radius-dx ball, which holds 3 nodes
    assert out[5] == 1.0 and out[6] == pytest.approx(1 / 3)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_maximal_dominates_and_matches_oracle(seed):
    rng = np.random.default_rng(seed)
    g = SpatialGrid(5.0, 10, 2)
    f = rng.exponential(size=g.shape)
    out = hl_maximal(f, g)
    assert np.all(out >= f - 1e-15)
    assert np.allclose(out, hl_maximal_bruteforce(f, g), rtol=1e-13, atol=0)


def test_maximal_clips_negative():
    g = SpatialGrid(4.0, 8)
    with pytest.warns(AccuracyWarning):
        out = hl_maximal(-np.ones(8), g)
    assert np.all(out == 0)


def test_lemma_diagonal_state_has_zero_lhs():
    g = SpatialGrid(6.0, 6, 3)
    dm = DensityMatrix(np.eye(g.size, dtype=complex) * g.cell_volume, g, 1.0, 1.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AccuracyWarning)
        check = lemma3_check(dm, 0.1)
    assert all(s.lhs == 0 for s in check.samples)


def test_lemma_small_gaussian_state():
    g = SpatialGrid(10.0, 8, 3)
    dm = gaussian_kernel_state(g, 1.0, 1, 1.2, 1.2)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AccuracyWarning)
        check = lemma3_check(dm, 0.1, centers=[(0, 0, 0)])
    assert len(check.samples) == 3
    assert all(math.isfinite(s.ratio) and s.ratio > 0 for s in check.samples)
    assert check.lhs_agreement < 1e-10
    assert check.passed in (True, False)


def test_lemma_verdict_only_in_3d():
    g = SpatialGrid(10.0, 32)
    dm = gaussian_kernel_state(g, 0.25, 4, 1.0, 0.5)
    check = lemma3_check(dm, 0.1)
    assert check.passed is None
    with pytest.raises(ValueError):
        lemma3_check(dm, 0.7)


def test_assumption_monitor_zero_state():
    g = SpatialGrid(10.0, 16)
    dm = DensityMatrix(np.zeros((16, 16), dtype=complex), g, 0.25, 4)
    samples, passed = assumption9_monitor([dm])
    assert samples[0].lhs == 0 and passed


def test_duhamel_at_zero_and_free():
    recs = [CheckpointRecord(0.0, 0.0, 0.0, 0.0), CheckpointRecord(0.5, 1e-13, 0.0, 0.0)]
    duh, ratios, ok = duhamel_monitor(recs, 0.1)
    assert ok
    assert duh[0].lhs == 0 and duh[0].rhs == 0
    assert ratios == []


def test_duhamel_integrates_trapezoid():
    recs = [CheckpointRecord(t, 0.4 * t, 0.1 * t, 0.2) for t in (0.0, 0.5, 1.0)]
    duh, _, ok = duhamel_monitor(recs, 0.5)
    # integral of 0.1 t + 0.2 over [0, 1] is 0.25; divided by hbar
    assert duh[-1].rhs == pytest.approx(0.5)
    assert ok


def test_duhamel_detects_violation():
    recs = [CheckpointRecord(0.0, 0.0, 0.0, 0.0), CheckpointRecord(1.0, 1.0, 0.01, 0.01)]
    _, _, ok = duhamel_monitor(recs, 1.0)
    assert not ok


def test_duhamel_rejects_unordered():
    with pytest.raises(ValueError):
        duhamel_monitor([CheckpointRecord(0.1, 0, 0, 0)], 1.0)
    with pytest.raises(ValueError):
        duhamel_monitor([CheckpointRecord(0.0, 0, 0, 0), CheckpointRecord(0.0, 0, 0, 0)], 1.0)


def test_monitor_sample_ratio():
    assert MonitorSample(0, 0.0, 0.0).ratio == 0.0
    assert MonitorSample(0, 1.0, 0.0).ratio == math.inf
    with pytest.raises(ValueError):
        MonitorSample(0, -1.0, 1.0)


HBARS = [1 / 16, 1 / 32, 1 / 64, 1 / 128]


def test_fit_linear():
    fit = scaling_fit([(h, h) for h in HBARS])
    assert fit.slope == pytest.approx(1.0, abs=1e-12)
    assert fit.constant == pytest.approx(1.0, rel=1e-12)


def test_fit_quadratic_with_constant():
    fit = scaling_fit([(h, 3 * h * h) for h in HBARS])
    assert fit.slope == pytest.approx(2.0, abs=1e-12)
    assert fit.intercept == pytest.approx(math.log(3), abs=1e-12)
    assert fit.ci[0] <= fit.slope <= fit.ci[1]


def test_fit_is_deterministic_and_validates():
    pts = [(h, h**1.5 * (1 + 0.1 * i)) for i, h in enumerate(HBARS)]
    assert scaling_fit(pts) == scaling_fit(pts)
    with pytest.raises(ValueError):
        scaling_fit(pts[:3])
    with pytest.raises(ValueError):
        scaling_fit([(h, 0.0) for h in HBARS])


def test_empty_sweep_report():
    rep = SweepReport()
    rep.fit()
    d = rep.to_dict()
    assert d["hbar"] == [] and d["distance_fit"] is None and d["prop1_variation"] is None
