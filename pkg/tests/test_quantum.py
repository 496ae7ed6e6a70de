import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_hermitian
from hvlab.core import AccuracyWarning, GridIncompatibilityError, SpatialGrid, StateConstructionError, wigner_phase_grid
from hvlab.kinetic import PhaseSpaceField, free_transport_reference
from hvlab.potentials import make_potential, periodized_kernel
from hvlab.quantum import (
    DensityMatrix,
    MixedStateSpec,
    build_mixed_state,
    commutator_density,
    energy,
    gaussian_kernel_state,
    hartree_step,
    load_density_matrix,
    remainder_operator,
    save_density_matrix,
    spatial_density,
    trace_norm,
    trace_norm_distance,
    trace_norm_svd,
)
from hvlab.transforms import weyl, wigner


@pytest.fixture(scope="module")
def fd_state():
    g = SpatialGrid(10.0, 256)
    return build_mixed_state(MixedStateSpec("fermi_dirac"), g, 1 / 16)


def test_build_gaussian_profile_trace():
    g = SpatialGrid(10.0, 512)
    dm = build_mixed_state(MixedStateSpec("gaussian"), g, 1 / 32)
    assert dm.trace == pytest.approx(32.0, rel=1e-13)
    ev = dm.eigenvalues()
    assert ev.min() >= -1e-12 and ev.max() <= 1 + 1e-12
    assert dm.clipped < 1e-3
    assert dm.hermiticity_error() < 1e-14


def test_pauli_violation_rejected():
    g = SpatialGrid(10.0, 256)
    # a narrow profile crowds N particles into a tiny phase-space volume
    spec = MixedStateSpec("gaussian", (("sigma_x", 0.1), ("sigma_v", 0.1)))
    with pytest.raises(StateConstructionError):
        build_mixed_state(spec, g, 1 / 16)


def test_wigner_of_state_close_to_profile(fd_state):
    pg = wigner_phase_grid(fd_state.grid, fd_state.hbar)
    w0 = MixedStateSpec("fermi_dirac").sample(pg)
    w = wigner(fd_state).values
    l2 = math.sqrt(np.sum((w - w0) ** 2) * pg.cell_volume)
    assert l2 < fd_state.hbar**2 + fd_state.clipped


def test_free_evolution_matches_transport(fd_state):
    dm = fd_state
    pg = wigner_phase_grid(dm.grid, dm.hbar)
    f0 = PhaseSpaceField(pg, MixedStateSpec("fermi_dirac").sample(pg))
    for _ in range(100):
        dm = hartree_step(dm, 0.01, None)
    ref = weyl(free_transport_reference(f0, 1.0), dm.hbar, dm.n_particles)
    assert trace_norm(dm.matrix - ref.matrix) / 16 < 1e-6


def test_trace_conservation_1000_steps():
    g = SpatialGrid(10.0, 128)
    dm = gaussian_kernel_state(g, 1 / 8, 8, 1.0, 0.6)
    kernel = periodized_kernel(make_potential("soft_coulomb", eps=1.0), g)
    for _ in range(1000):
        dm = hartree_step(dm, 0.005, kernel)
    assert abs(dm.trace / 8 - 1) < 1e-12


def _evolve(dm, kernel, dt, T):
    for _ in range(int(round(T / dt))):
        dm = hartree_step(dm, dt, kernel)
    return dm


def test_hartree_self_convergence():
    g = SpatialGrid(10.0, 128)
    dm = gaussian_kernel_state(g, 1 / 8, 8, 1.0, 0.6)
    kernel = periodized_kernel(make_potential("soft_coulomb", eps=1.0, strength=4.0), g)
    ref = _evolve(dm, kernel, 0.1 / 8, 0.5)
    e1 = trace_norm(_evolve(dm, kernel, 0.1, 0.5).matrix - ref.matrix)
    e2 = trace_norm(_evolve(dm, kernel, 0.05, 0.5).matrix - ref.matrix)
    assert math.log2(e1 / e2) == pytest.approx(2.0, abs=0.2)


def test_exchange_step_unitary():
    g = SpatialGrid(8.0, 32)
    dm = gaussian_kernel_state(g, 1 / 4, 4, 1.0, 0.6)
    kernel = periodized_kernel(make_potential("gaussian"), g)
    out = hartree_step(dm, 0.01, kernel, with_exchange=True)
    assert np.allclose(np.linalg.eigvalsh(out.matrix), np.linalg.eigvalsh(dm.matrix), atol=1e-12)


def test_density_of_projector():
    g = SpatialGrid(10.0, 64)
    phi = np.exp(-((g.nodes - 0.5) ** 2)).astype(complex)
    phi /= math.sqrt(np.sum(abs(phi) ** 2) * g.dx)
    dm = DensityMatrix(4 * np.outer(phi, phi.conj()) * g.dx, g, 0.25, 4)
    rho = spatial_density(dm)
    assert np.allclose(rho, abs(phi) ** 2, atol=1e-14)
    assert np.sum(rho) * g.dx == pytest.approx(1.0, rel=1e-13)


def test_density_translation_covariant():
    g = SpatialGrid(10.0, 64)
    dm = gaussian_kernel_state(g, 1 / 4, 4, 1.0, 0.5)
    shifted = dm.with_matrix(np.roll(np.roll(dm.matrix, 1, 0), 1, 1))
    assert np.allclose(spatial_density(shifted), np.roll(spatial_density(dm), 1))


def test_trace_norm_basics(rng):
    a = random_hermitian(rng, 32)
    assert trace_norm(a - a) == 0.0
    da, db = rng.normal(size=16), rng.normal(size=16)
    g = SpatialGrid(4.0, 16)
    x = DensityMatrix(np.diag(da * g.dx).astype(complex), g, 1.0, 1.0)
    y = DensityMatrix(np.diag(db * g.dx).astype(complex), g, 1.0, 1.0)
    assert trace_norm_distance(x, y) == pytest.approx(np.sum(np.abs(da - db)) * g.dx, rel=1e-13)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_trace_norm_matches_svd(seed):
    rng = np.random.default_rng(seed)
    a, b = random_hermitian(rng, 32), random_hermitian(rng, 32)
    ref = float(np.sum(np.linalg.svd(a - b, compute_uv=False)))
    assert abs(trace_norm(a - b) - ref) < 1e-12 * max(ref, 1.0)
    c = a @ b - b @ a
    assert abs(trace_norm(c, "antihermitian") - trace_norm_svd(c)) < 1e-12 * max(trace_norm_svd(c), 1.0)


def test_distance_rejects_mismatched_states():
    g = SpatialGrid(8.0, 16)
    a = gaussian_kernel_state(g, 0.5, 2, 1.0, 0.5)
    b = gaussian_kernel_state(g, 0.25, 4, 1.0, 0.5)
    with pytest.raises(GridIncompatibilityError):
        trace_norm_distance(a, b)


def test_commutator_of_diagonal_state_vanishes():
    g = SpatialGrid(10.0, 32)
    dm = DensityMatrix(np.diag(np.exp(-(g.nodes**2)) * g.dx).astype(complex), g, 1.0, 1.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AccuracyWarning)
        c = commutator_density(dm)
    assert c.l1 == 0.0 and c.linf == 0.0


def test_commutator_density_of_projector_matches_dense_oracle():
    # the box must hold the kernel, not only the density, for x - y to be unambiguous
    g = SpatialGrid(24.0, 192)
    hbar = 1 / 8
    phi = np.exp(-(g.nodes**2) / 2).astype(complex)
    phi /= math.sqrt(np.sum(abs(phi) ** 2) * g.dx)
    dm = DensityMatrix(8 * np.outer(phi, phi.conj()) * g.dx, g, hbar, 8)
    c = commutator_density(dm)
    x = np.diag(g.nodes)
    comm = x @ dm.matrix - dm.matrix @ x
    sv = np.linalg.svd(comm, compute_uv=False)
    assert c.l1 == pytest.approx(float(np.sum(sv)), rel=1e-10)
    assert c.local


def test_commutator_translation_invariant_scaling():
    ratios = []
    for k in (4, 5, 6, 7):
        hbar = 2.0**-k
        n = 2 ** (k + 4)
        g = SpatialGrid(10.0, n)
        pg = wigner_phase_grid(g, hbar)
        f = PhaseSpaceField(pg, MixedStateSpec("uniform_x").sample(pg))
        dm = weyl(f, hbar, round(1 / hbar))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", AccuracyWarning)
            c = commutator_density(dm)
        ratios.append(c.l1 / (dm.n_particles * hbar))
    assert max(ratios) / min(ratios) < 1.5


def test_remainder_vanishes_for_constant_field():
    g = SpatialGrid(10.0, 64)
    dm = gaussian_kernel_state(g, 1 / 8, 8, 1.0, 0.5)
    assert np.max(np.abs(remainder_operator(dm, np.full(64, 2.5)))) == 0.0


def test_remainder_matches_midpoint_formula():
    g = SpatialGrid(10.0, 64)
    dm = gaussian_kernel_state(g, 1 / 8, 8, 0.7, 1.0)
    k = 2 * np.pi / g.length
    U = np.sin(k * g.nodes)
    B = remainder_operator(dm, U)
    x = g.nodes
    s = g.minimal_image(x[:, None] - x[None, :])
    s[np.isclose(np.abs(s), g.length / 2)] = 0.0
    c = x[None, :] + s / 2
    xs = c + s / 2
    ys = c - s / 2
    exact = (np.sin(k * xs) - np.sin(k * ys) - k * np.cos(k * c) * s) * dm.matrix
    assert np.max(np.abs(B - exact)) < 1e-12
    assert np.max(np.abs(B + B.conj().T)) < 1e-14


def test_energy_conservation_small_dt():
    g = SpatialGrid(10.0, 128)
    dm = gaussian_kernel_state(g, 1 / 8, 8, 1.0, 0.6)
    kernel = periodized_kernel(make_potential("gaussian"), g)
    e0 = energy(dm, kernel)
    for _ in range(200):
        dm = hartree_step(dm, 1e-3, kernel)
    assert abs(energy(dm, kernel) - e0) / abs(e0) < 1e-6


def test_checkpoint_round_trip(tmp_path, fd_state):
    path = tmp_path / "state.dmx"
    save_density_matrix(fd_state, path)
    back = load_density_matrix(path)
    assert np.array_equal(back.matrix, fd_state.matrix)
    assert back.hbar == fd_state.hbar and back.grid == fd_state.grid
