import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from hvlab.core import ConfigurationError, PhaseGrid, SpatialGrid, wigner_phase_grid
from hvlab.kinetic import (
    SERIES_COLUMNS,
    DomainTooSmallError,
    PhaseSpaceField,
    edge_mass,
    free_transport_reference,
    load_field,
    save_field,
    series_row,
    sobolev_norm,
    vlasov_density,
    vlasov_step,
    write_series,
)
from hvlab.potentials import make_potential, periodized_kernel
from hvlab.quantum import gaussian_kernel_state, spatial_density
from hvlab.transforms import wigner


def gaussian_field(pg, sx=1.0, sv=0.5, x0=0.0, v0=0.0):
    x, v = pg.axes_coordinates()
    w = np.exp(-((x - x0) ** 2) / (2 * sx**2) - (v - v0) ** 2 / (2 * sv**2))
    w = w / (np.sum(w) * pg.cell_volume)
    return PhaseSpaceField(pg, np.broadcast_to(w, pg.shape).copy())


@pytest.fixture
def pg():
    return PhaseGrid(SpatialGrid(12.0, 64), 5.0, 64)


def test_free_transport_matches_shifted_profile(pg):
    f = gaussian_field(pg)
    g = f
    for _ in range(10):
        g = vlasov_step(g, 0.1, None)
    x, v = pg.axes_coordinates()
    xs = pg.spatial.minimal_image(x - v * 1.0)
    exact = np.exp(-(xs**2) / 2 - v**2 / (2 * 0.25))
    exact = exact / (np.sum(exact) * pg.cell_volume)
    assert np.max(np.abs(g.values - exact)) < 1e-8


def test_free_steps_agree_with_reference(pg):
    f = gaussian_field(pg)
    g = f
    for _ in range(1000):
        g = vlasov_step(g, 0.001, None)
    ref = free_transport_reference(f, 1.0)
    assert math.sqrt(np.sum((g.values - ref.values) ** 2) * pg.cell_volume) < 1e-10


def test_reference_group_property(pg):
    f = gaussian_field(pg)
    a = free_transport_reference(free_transport_reference(f, 0.3), 0.45)
    b = free_transport_reference(f, 0.75)
    assert math.sqrt(np.sum((a.values - b.values) ** 2) * pg.cell_volume) < 1e-12
    assert np.array_equal(free_transport_reference(f, 0.0).values, f.values)


def test_mass_conservation_1000_steps(pg):
    kernel = periodized_kernel(make_potential("soft_coulomb", eps=1.0), pg.spatial)
    f = gaussian_field(pg)
    m0 = f.mass
    for _ in range(1000):
        f = vlasov_step(f, 0.001, kernel)
    assert abs(f.mass - m0) < 1e-12


def _evolve(f, kernel, dt, T):
    for _ in range(int(round(T / dt))):
        f = vlasov_step(f, dt, kernel)
    return f


def test_vlasov_self_convergence(pg):
    kernel = periodized_kernel(make_potential("soft_coulomb", eps=1.0, strength=4.0), pg.spatial)
    f = gaussian_field(pg, 0.8, 0.5)
    ref = _evolve(f, kernel, 0.1 / 8, 0.5)
    e1 = np.linalg.norm(_evolve(f, kernel, 0.1, 0.5).values - ref.values)
    e2 = np.linalg.norm(_evolve(f, kernel, 0.05, 0.5).values - ref.values)
    assert math.log2(e1 / e2) == pytest.approx(2.0, abs=0.2)


def test_separable_density(pg):
    x, v = pg.axes_coordinates()
    fx = np.exp(-(x**2))
    gv = np.exp(-(v**2)) * (1 + 0 * v)
    f = PhaseSpaceField(pg, fx * gv)
    assert np.allclose(vlasov_density(f), fx.ravel() * np.sum(gv) * pg.dv)
    u = PhaseSpaceField(pg, np.ones(pg.shape))
    assert np.allclose(vlasov_density(u), 2 * pg.vmax)


def test_density_matches_quantum_density():
    g = SpatialGrid(10.0, 64)
    dm = gaussian_kernel_state(g, 1 / 8, 8, 1.0, 0.5)
    assert np.allclose(vlasov_density(wigner(dm)), spatial_density(dm), atol=1e-8)


def test_sobolev_zero_and_gaussian_l2():
    pg = PhaseGrid(SpatialGrid(16.0, 64), 8.0, 64)
    assert sobolev_norm(PhaseSpaceField(pg, np.zeros(pg.shape)), 2, 4) == 0.0
    sx, sv = 1.0, 0.8
    f = gaussian_field(pg, sx, sv)
    dens = lambda v, x: (np.exp(-(x**2) / (2 * sx**2) - v**2 / (2 * sv**2)) / (2 * math.pi * sx * sv)) ** 2  # noqa: E731
    ref = math.sqrt(integrate.dblquad(dens, -8, 8, -8, 8, epsabs=1e-14)[0])
    assert ref == pytest.approx((4 * math.pi * sx * sv) ** -0.5, rel=1e-10)
    assert sobolev_norm(f, 0, 0) == pytest.approx(ref, rel=1e-10)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_sobolev_monotone_in_k(seed):
    rng = np.random.default_rng(seed)
    pg = PhaseGrid(SpatialGrid(2 * np.pi, 16), np.pi, 16)
    x, v = pg.axes_coordinates()
    a, b, c = rng.normal(size=3)
    w = np.exp(-(v**2)) * (a * np.cos(x) + b * np.sin(2 * x) + c) + 0 * x
    f = PhaseSpaceField(pg, w)
    norms = [sobolev_norm(f, k, 1.0) for k in range(4)]
    assert all(n2 >= n1 for n1, n2 in zip(norms, norms[1:]))


def test_sobolev_validates():
    pg = PhaseGrid(SpatialGrid(4.0, 8), 2.0, 8)
    f = PhaseSpaceField(pg, np.zeros(pg.shape))
    with pytest.raises(ValueError):
        sobolev_norm(f, 7, 0)
    with pytest.raises(ValueError):
        sobolev_norm(f, 1, -1)


def test_outflow_raises_after_ten_steps():
    pg = PhaseGrid(SpatialGrid(12.0, 32), 1.0, 32)
    f = gaussian_field(pg, 1.0, 2.0)
    assert edge_mass(f) > 1e-12
    with pytest.warns(Warning):
        with pytest.raises(DomainTooSmallError):
            for _ in range(20):
                f = vlasov_step(f, 0.01, None)


def test_step_validates_dt(pg):
    with pytest.raises(ConfigurationError):
        vlasov_step(gaussian_field(pg), 0.0, None)


def test_field_validation(pg):
    with pytest.raises(ValueError):
        PhaseSpaceField(pg, np.zeros((3, 3)))
    with pytest.raises(ValueError):
        PhaseSpaceField(pg, np.zeros(pg.shape, dtype=complex))


def test_field_checkpoint(tmp_path, pg):
    f = gaussian_field(pg)
    save_field(f, tmp_path / "f.psf")
    back = load_field(tmp_path / "f.psf")
    assert np.array_equal(back.values, f.values) and back.grid == f.grid


def test_series_output(tmp_path):
    pg = wigner_phase_grid(SpatialGrid(12.0, 64), 1 / 4)
    f = gaussian_field(pg, 0.8, 0.4)
    row = series_row(f)
    assert tuple(row) == SERIES_COLUMNS
    write_series([row], tmp_path / "s.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == ",".join(SERIES_COLUMNS)
    assert float(lines[1].split(",")[1]) == pytest.approx(1.0, abs=1e-14)
