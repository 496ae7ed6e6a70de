import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from hvlab.core import CapabilityError
from hvlab.fdll import (
    GaussianBump,
    RangeError,
    ball_intersection_volume,
    compute_weight,
    literal_weight,
    reconstruct_gaussian,
    reconstruct_indicator,
    verify_rows,
)
from hvlab.potentials import make_potential


@pytest.fixture(scope="module")
def coulomb3():
    return compute_weight(make_potential("coulomb"), 3)


def test_lens_volume_limits():
    assert ball_intersection_volume(3, 1.0, 0.0) == pytest.approx(4 * math.pi / 3)
    assert ball_intersection_volume(3, 1.0, 2.0) == 0.0
    assert ball_intersection_volume(3, 1.0, 3.5) == 0.0
    assert ball_intersection_volume(2, 1.0, 0.0) == pytest.approx(math.pi)
    with pytest.raises(CapabilityError):
        ball_intersection_volume(4, 1.0, 0.5)


@pytest.mark.parametrize("n, d", [(3, 1.0), (3, 0.4), (2, 1.0), (2, 1.7)])
def test_lens_volume_monte_carlo(n, d):
    rng = np.random.default_rng(7)
    pts = rng.uniform(-1, 1, size=(400_000, n))
    inside = (np.sum(pts**2, axis=1) <= 1) & (np.sum((pts - np.eye(n)[0] * d) ** 2, axis=1) <= 1)
    mc = inside.mean() * 2.0**n
    assert ball_intersection_volume(n, 1.0, d) == pytest.approx(mc, rel=1e-2)


def test_lens_volume_r1_d1():
    assert ball_intersection_volume(3, 1.0, 1.0) == pytest.approx(5 * math.pi / 12, rel=1e-15)


def test_coulomb_weight_closed_form(coulomb3):
    r = np.array([0.1, 0.5, 1.0, 3.0])
    assert np.allclose(coulomb3.weight(r), 1 / (np.pi * r**5), rtol=1e-6)
    assert coulomb3.c_star == pytest.approx(1.0, abs=1e-9)
    assert coulomb3.literal_ratio == pytest.approx(16.0, rel=1e-9)
    assert coulomb3.quadrature_check < 1e-8


def _symbolic_coulomb(d):
    r = sp.symbols("r", positive=True)
    integrand = 1 / (sp.pi * r**5) * sp.pi / 12 * (4 * r + d) * (2 * r - d) ** 2
    return float(sp.integrate(integrand, (r, sp.Rational(d) / 2, sp.oo)))


@pytest.mark.parametrize("d", [1, 2])
def test_indicator_reconstruction_coulomb(coulomb3, d):
    ref = _symbolic_coulomb(d)
    assert ref == pytest.approx(1 / d, rel=1e-14)
    assert reconstruct_indicator(coulomb3, float(d)) == pytest.approx(ref, rel=1e-9)


def test_yukawa_reconstruction():
    w = compute_weight(make_potential("yukawa", mu=1.0), 3)
    for d in np.linspace(0.2, 5.0, 7):
        v = math.exp(-d) / d
        assert abs(reconstruct_indicator(w, d) - v) / v < 1e-6


def test_zero_potential():
    w = compute_weight(make_potential("zero"), 3)
    assert not np.any(w.g)
    assert reconstruct_indicator(w, 1.0) == 0.0
    assert reconstruct_gaussian(w, 1.0) == (0.0, 0.0)


def test_n2_soft_coulomb_reconstruction():
    w = compute_weight(make_potential("soft_coulomb", eps=0.5), 2, n_probes=6)
    for d in (0.5, 1.0, 2.0):
        v = 1 / math.sqrt(d * d + 0.25)
        assert reconstruct_indicator(w, d) == pytest.approx(v, rel=1e-6)


def test_quadrature_agrees_with_closed_form():
    V = make_potential("yukawa", mu=0.7)
    r = np.array([0.2, 1.0, 4.0])
    assert np.allclose(literal_weight(V, 3, r, "quadrature"), literal_weight(V, 3, r, "closed"), rtol=1e-9)


def test_gaussian_forms(coulomb3):
    full = [reconstruct_gaussian(coulomb3, d, "full") for d in (0.5, 1.0, 2.0)]
    reduced = [reconstruct_gaussian(coulomb3, d, "reduced") for d in (0.5, 1.0, 2.0)]
    for value, dev in full:
        assert abs(dev) < 1e-8
    devs = [dev for _, dev in reduced]
    # homogeneity of 1/r makes the reduced-form deviation independent of d
    assert max(devs) - min(devs) < 1e-8
    with pytest.raises(ValueError):
        reconstruct_gaussian(coulomb3, 1.0, "other")


def test_range_checks(coulomb3):
    with pytest.raises(RangeError):
        reconstruct_indicator(coulomb3, 0.0)
    with pytest.raises(RangeError):
        reconstruct_indicator(coulomb3, 1e4)


def test_unsupported_dimension():
    with pytest.raises(CapabilityError):
        compute_weight(make_potential("coulomb"), 4)


def test_verify_rows(coulomb3):
    rows = verify_rows(coulomb3, (0.25, 0.5, 1.0, 2.0, 4.0))
    assert [r["d"] for r in rows] == [0.25, 0.5, 1.0, 2.0, 4.0]
    assert all(abs(r["d"] * r["reconstructed"] - 1) < 1e-6 for r in rows)


def test_gaussian_bump():
    b = GaussianBump((0.0, 1.0), 2.0)
    assert b(np.array([0.0, 1.0])) == 1.0
    assert b(np.array([2.0, 1.0])) == pytest.approx(math.exp(-1))


@settings(max_examples=30, deadline=None)
@given(st.floats(0.1, 5.0), st.floats(0.0, 1.0))
def test_lens_volume_monotone(r, frac):
    d1, d2 = 2 * r * frac, 2 * r * min(1.0, frac + 0.1)
    for n in (2, 3):
        assert ball_intersection_volume(n, r, d1) >= ball_intersection_volume(n, r, d2) - 1e-12
