"""Density matrices on a periodic grid and their Hartree evolution.

Matrices are stored as ``M = kernel * dx^d`` so that operator traces and
products are plain matrix traces and products.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .core import (
    AccuracyWarning,
    ConfigurationError,
    GridIncompatibilityError,
    NumericError,
    SpatialGrid,
    StateConstructionError,
    warn_accuracy,
    wigner_phase_grid,
)
from .potentials import PeriodicKernel, convolve, spectral_gradient

CLIP_LIMIT = 1e-3
LOCALITY_TOL = 1e-8
LOCALITY_MARGIN = 0.05


@dataclass(frozen=True)
class DensityMatrix:
    matrix: np.ndarray
    grid: SpatialGrid
    hbar: float
    n_particles: float
    t: float = 0.0
    clipped: float = 0.0

    def __post_init__(self):
        m = np.asarray(self.matrix)
        size = self.grid.size
        if m.shape != (size, size):
            raise ValueError(f"matrix shape {m.shape} does not match grid size {size}")

    @property
    def kernel(self) -> np.ndarray:
        return self.matrix / self.grid.cell_volume

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    def hermiticity_error(self) -> float:
        m = self.matrix
        return float(np.max(np.abs(m - m.conj().T)))

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)

    def with_matrix(self, matrix, t=None) -> "DensityMatrix":
        return replace(self, matrix=matrix, t=self.t if t is None else t)


def _check_compatible(a: DensityMatrix, b: DensityMatrix) -> None:
    if a.grid != b.grid:
        raise GridIncompatibilityError("density matrices live on different grids")
    if not math.isclose(a.hbar, b.hbar, rel_tol=1e-12):
        raise GridIncompatibilityError(f"density matrices have different hbar ({a.hbar} vs {b.hbar})")


# ---------------------------------------------------------------------------
# Initial states
# ---------------------------------------------------------------------------

PROFILES = {
    "fermi_dirac": {"beta": 4.0, "mu": 1.5, "x0": 0.0, "v0": 0.0},
    "gaussian": {"sigma_x": 1.1, "sigma_v": 1.1, "x0": 0.0, "v0": 0.0},
    "uniform_x": {"sigma_v": 0.6, "v0": 0.0},
}


@dataclass(frozen=True)
class MixedStateSpec:
    """Phase-space profile ``W0``; ``uniform_x`` is translation invariant (a Gaussian in v only)."""

    profile: str = "fermi_dirac"
    params: tuple = ()

    def __post_init__(self):
        if self.profile not in PROFILES:
            raise ConfigurationError(f"unknown profile {self.profile!r}; choose from {sorted(PROFILES)}")
        unknown = set(dict(self.params)) - set(PROFILES[self.profile])
        if unknown:
            raise ConfigurationError(f"unknown parameters for {self.profile!r}: {sorted(unknown)}")

    def resolved(self) -> dict:
        out = dict(PROFILES[self.profile])
        out.update(dict(self.params))
        return out

    def raw(self, phase_grid) -> np.ndarray:
        p = self.resolved()
        d = phase_grid.dim
        coords = phase_grid.axes_coordinates()
        xs, vs = coords[:d], coords[d:]
        if self.profile == "fermi_dirac":
            h = sum((x - p["x0"]) ** 2 for x in xs) / 2 + sum((v - p["v0"]) ** 2 for v in vs) / 2
            arg = p["beta"] * (h - p["mu"])
            return np.broadcast_to(0.5 * (1 - np.tanh(0.5 * arg)), phase_grid.shape).copy()
        if self.profile == "gaussian":
            e = sum((x - p["x0"]) ** 2 for x in xs) / (2 * p["sigma_x"] ** 2)
            e = e + sum((v - p["v0"]) ** 2 for v in vs) / (2 * p["sigma_v"] ** 2)
            return np.broadcast_to(np.exp(-e), phase_grid.shape).copy()
        e = sum((v - p["v0"]) ** 2 for v in vs) / (2 * p["sigma_v"] ** 2)
        return np.broadcast_to(np.exp(-e), phase_grid.shape).copy()

    def sample(self, phase_grid) -> np.ndarray:
        """Profile on ``phase_grid`` normalized to unit phase-space mass."""
        w = self.raw(phase_grid)
        total = math.fsum(np.ravel(w)) * phase_grid.cell_volume
        if not total > 0:
            raise StateConstructionError("profile has zero mass on the grid")
        return w / total


def clip_spectrum(matrix: np.ndarray, n_particles: float):
    """Project onto ``0 <= M <= 1`` and restore the trace; return (matrix, clipped mass / N)."""
    vals, vecs = np.linalg.eigh(matrix)
    clipped = float(np.sum(np.maximum(vals - 1, 0)) + np.sum(np.maximum(-vals, 0))) / n_particles
    vals = np.clip(vals, 0.0, 1.0)
    vals *= n_particles / math.fsum(vals)
    if vals.max() > 1 + 1e-12:
        raise StateConstructionError("trace renormalization pushes occupations above 1")
    out = (vecs * vals) @ vecs.conj().T
    return 0.5 * (out + out.conj().T), clipped


def build_mixed_state(spec: MixedStateSpec, grid: SpatialGrid, hbar: float, n_particles: float | None = None) -> DensityMatrix:
    """Weyl-quantize the profile on the matched phase grid and enforce ``0 <= omega <= 1``."""
    from .transforms import weyl_array

    d = grid.dim
    n_particles = float(round(hbar ** (-d))) if n_particles is None else float(n_particles)
    pg = wigner_phase_grid(grid, hbar)
    w0 = spec.sample(pg)
    matrix = weyl_array(w0, grid, hbar, n_particles)
    matrix, clipped = clip_spectrum(matrix, n_particles)
    if clipped >= CLIP_LIMIT:
        raise StateConstructionError(
            f"clipped mass {clipped:.3e} of N exceeds {CLIP_LIMIT:g}: the profile violates 0 <= omega <= 1 at hbar={hbar:g}"
        )
    return DensityMatrix(matrix, grid, float(hbar), n_particles, 0.0, clipped)


def gaussian_kernel_state(grid: SpatialGrid, hbar: float, n_particles: float, sigma_x: float, sigma_v: float, center=None) -> DensityMatrix:
    """Mixed Gaussian state written directly as a kernel (the Weyl symbol is a Gaussian).

    ``omega(x; y) ~ exp(-|c - x0|^2 / (2 sigma_x^2) - sigma_v^2 |s|^2 / (2 hbar^2))`` with
    ``c = y + s/2`` and ``s`` the minimal-image separation.  Useful on grids too
    coarse for the quantization map to resolve the velocity edge.
    """
    d = grid.dim
    center = np.zeros(d) if center is None else np.asarray(center, dtype=float)
    x = grid.nodes
    factors = []
    for i in range(d):
        s = grid.minimal_image(x[:, None] - x[None, :])
        c = grid.minimal_image(x[None, :] + s / 2 - center[i])
        factors.append(np.exp(-c ** 2 / (2 * sigma_x ** 2) - sigma_v ** 2 * s ** 2 / (2 * hbar ** 2)))
    k = factors[0]
    for f in factors[1:]:
        k = np.kron(k, f)
    k = 0.5 * (k + k.T)
    m = k.astype(complex)
    m *= n_particles / np.trace(m).real
    return DensityMatrix(m, grid, float(hbar), float(n_particles))


# ---------------------------------------------------------------------------
# Evolution
# ---------------------------------------------------------------------------


def _to_fourier(matrix: np.ndarray, grid: SpatialGrid) -> np.ndarray:
    d, n = grid.dim, grid.points
    a = matrix.reshape((n,) * (2 * d))
    a = np.fft.fftn(a, axes=tuple(range(d)))
    a = np.fft.ifftn(a, axes=tuple(range(d, 2 * d)))
    return a


def _from_fourier(arr: np.ndarray, grid: SpatialGrid) -> np.ndarray:
    d = grid.dim
    a = np.fft.ifftn(arr, axes=tuple(range(d)))
    a = np.fft.fftn(a, axes=tuple(range(d, 2 * d)))
    return a.reshape(grid.size, grid.size)


def _k_squared(grid: SpatialGrid) -> np.ndarray:
    k = grid.wavenumbers()
    d = grid.dim
    total = np.zeros(grid.shape)
    for ax in range(d):
        sh = [1] * d
        sh[ax] = grid.points
        total = total + (k ** 2).reshape(sh)
    return total


def kinetic_propagate(matrix: np.ndarray, grid: SpatialGrid, hbar: float, kinetic_factor: float, tau: float) -> np.ndarray:
    """Exact free evolution ``e^{-iK tau/hbar} M e^{iK tau/hbar}`` with ``K = -kinetic_factor hbar^2 Laplacian``."""
    d = grid.dim
    phase = np.exp(-1j * kinetic_factor * hbar * _k_squared(grid) * tau)
    arr = _to_fourier(matrix, grid)
    shape_a = grid.shape + (1,) * d
    shape_b = (1,) * d + grid.shape
    arr = arr * phase.reshape(shape_a) * phase.conj().reshape(shape_b)
    return _from_fourier(arr, grid)


def spatial_density(dm: DensityMatrix, warn: bool = True) -> np.ndarray:
    rho = np.real(np.diagonal(dm.matrix)).reshape(dm.grid.shape) / (dm.grid.cell_volume * dm.n_particles)
    if warn and rho.min() < -1e-8:
        warn_accuracy(f"spatial density has negative values down to {rho.min():.3e}")
    return rho


def _density_from_matrix(matrix, grid, n_particles):
    return np.real(np.diagonal(matrix)).reshape(grid.shape) / (grid.cell_volume * n_particles)


def interaction_matrix(kernel: PeriodicKernel) -> np.ndarray:
    """``V(x_a - x_b)`` for all node pairs (used by the exchange term)."""
    grid = kernel.grid
    d, n = grid.dim, grid.points
    vals = kernel.values
    grids = np.meshgrid(*[np.arange(n)] * d, indexing="ij")
    flat = [g.ravel() for g in grids]
    offs = tuple((flat[i][:, None] - flat[i][None, :]) % n for i in range(d))
    return vals[offs]


def hartree_step(
    dm: DensityMatrix,
    dt: float,
    kernel: PeriodicKernel | None,
    kinetic_factor: float = 0.5,
    with_exchange: bool = False,
    pair_potential: np.ndarray | None = None,
) -> DensityMatrix:
    """One Strang step (kinetic half, potential full, kinetic half).

    The mean field is computed from the density after the first kinetic half
    step.  With exchange, the potential step uses the Hermitian generator
    ``diag(U) - V(x - y) omega(x; y) / N`` from the same intermediate state.
    """
    if dt <= 0:
        raise ConfigurationError("dt must be positive")
    grid, hbar = dm.grid, dm.hbar
    m = kinetic_propagate(dm.matrix, grid, hbar, kinetic_factor, 0.5 * dt)
    if kernel is not None:
        rho = _density_from_matrix(m, grid, dm.n_particles)
        U = convolve(kernel, rho).ravel()
        if not np.all(np.isfinite(U)):
            raise NumericError("mean field contains non-finite values")
        wrap = float(np.max(np.abs(U))) * dt / hbar
        if wrap > math.pi:
            warn_accuracy(f"potential phase |U| dt / hbar = {wrap:.3g} exceeds pi")
        if with_exchange:
            pv = interaction_matrix(kernel) if pair_potential is None else pair_potential
            gen = np.diag(U).astype(complex) - pv * m / dm.n_particles
            gen = 0.5 * (gen + gen.conj().T)
            lam, vec = np.linalg.eigh(gen)
            prop = (vec * np.exp(-1j * lam * dt / hbar)) @ vec.conj().T
            m = prop @ m @ prop.conj().T
        else:
            ph = np.exp(-1j * U * dt / hbar)
            m = ph[:, None] * m * ph.conj()[None, :]
    m = kinetic_propagate(m, grid, hbar, kinetic_factor, 0.5 * dt)
    m = 0.5 * (m + m.conj().T)
    return dm.with_matrix(m, dm.t + dt)


def energy(dm: DensityMatrix, kernel: PeriodicKernel | None, kinetic_factor: float = 0.5) -> float:
    """``kinetic_factor hbar^2 tr(-Laplacian omega) + (N/2) int (V * rho) rho``."""
    grid = dm.grid
    diag_k = np.real(np.diagonal(_to_fourier(dm.matrix, grid).reshape(grid.size, grid.size)))
    kin = kinetic_factor * dm.hbar ** 2 * float(np.sum(_k_squared(grid).ravel() * diag_k))
    if kernel is None:
        return kin
    rho = spatial_density(dm, warn=False)
    pot = 0.5 * dm.n_particles * float(np.sum(convolve(kernel, rho) * rho)) * grid.cell_volume
    return kin + pot


# ---------------------------------------------------------------------------
# Trace norms and commutators
# ---------------------------------------------------------------------------


def trace_norm(matrix: np.ndarray, kind: str = "hermitian") -> float:
    """Sum of singular values.  ``kind`` is ``hermitian``, ``antihermitian`` or ``general``."""
    try:
        if kind == "hermitian":
            return float(np.sum(np.abs(np.linalg.eigvalsh(matrix))))
        if kind == "antihermitian":
            return float(np.sum(np.abs(np.linalg.eigvalsh(1j * matrix))))
        return float(np.sum(np.linalg.svd(matrix, compute_uv=False)))
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"eigendecomposition failed: {exc}") from exc


def trace_norm_svd(matrix: np.ndarray) -> float:
    return trace_norm(matrix, "general")


def trace_norm_distance(a: DensityMatrix, b: DensityMatrix) -> float:
    _check_compatible(a, b)
    return trace_norm(a.matrix - b.matrix)


def pair_displacements(grid: SpatialGrid) -> list[np.ndarray]:
    """Minimal-image ``x_i - y_i`` for all node pairs, one matrix per axis.

    The separation exactly half a box is ambiguous on the torus and is set to 0.
    """
    d, n = grid.dim, grid.points
    x = grid.nodes
    s1 = grid.minimal_image(x[:, None] - x[None, :])
    s1[np.isclose(np.abs(s1), grid.length / 2)] = 0.0
    out = []
    for i in range(d):
        mats = [np.ones((n, n))] * d
        mats[i] = s1
        m = mats[0]
        for f in mats[1:]:
            m = np.kron(m, f)
        out.append(m)
    return out


def locality_ok(dm: DensityMatrix) -> bool:
    """Density below 1e-8 within 5% of the box boundary along every axis."""
    grid = dm.grid
    rho = np.abs(spatial_density(dm, warn=False))
    near = np.zeros(grid.shape, dtype=bool)
    for c in grid.coordinates():
        near = near | (np.abs(c) >= (0.5 - LOCALITY_MARGIN) * grid.length)
    return bool(np.all(rho[near] <= LOCALITY_TOL))


@dataclass(frozen=True)
class CommutatorDensity:
    rho_abs: np.ndarray
    l1: float
    linf: float
    local: bool


def abs_diagonal(antiherm: np.ndarray) -> np.ndarray:
    """Diagonal of ``|C|`` for an anti-Hermitian matrix ``C``."""
    try:
        lam, vec = np.linalg.eigh(1j * antiherm)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"eigendecomposition failed: {exc}") from exc
    return np.real(np.einsum("ij,j,ij->i", vec, np.abs(lam), vec.conj()))


def commutator_density(dm: DensityMatrix, axis: int = 0, displacements=None) -> CommutatorDensity:
    """Diagonal of ``|[x_i, omega]|`` in kernel units with its L1 and sup norms."""
    grid = dm.grid
    if not 0 <= axis < grid.dim:
        raise ValueError(f"axis {axis} out of range for d={grid.dim}")
    disp = pair_displacements(grid) if displacements is None else displacements
    c = disp[axis] * dm.matrix
    diag = abs_diagonal(c)
    rho_abs = diag.reshape(grid.shape) / grid.cell_volume
    l1 = float(np.sum(diag))
    linf = float(np.max(rho_abs))
    local = locality_ok(dm)
    if not local:
        warnings.warn("state is not localized away from the box boundary; commutator diagnostics are unreliable", AccuracyWarning, stacklevel=2)
    return CommutatorDensity(rho_abs, l1, linf, local)


def multiplication_commutator(f: np.ndarray, dm: DensityMatrix) -> np.ndarray:
    """Matrix of ``[f, omega]`` for a multiplication operator ``f``."""
    fv = np.asarray(f).ravel()
    return (fv[:, None] - fv[None, :]) * dm.matrix


def multiplication_commutator_trace_norm(f: np.ndarray, dm: DensityMatrix) -> float:
    return trace_norm(multiplication_commutator(f, dm), "antihermitian")


def _staggered_values(g: np.ndarray, grid: SpatialGrid) -> dict:
    """``g`` evaluated on the nodes shifted by half a cell along any subset of axes."""
    d = grid.dim
    q = grid.wavenumbers()
    n = grid.points
    mult = np.exp(0.5j * q * grid.dx)
    mult[n // 2] = 1.0
    hat = np.fft.fftn(g)
    out = {}
    for mask in range(2 ** d):
        s = hat
        for ax in range(d):
            if mask >> ax & 1:
                sh = [1] * d
                sh[ax] = n
                s = s * mult.reshape(sh)
        out[mask] = np.real(np.fft.ifftn(s))
    return out


def remainder_operator(dm: DensityMatrix, U: np.ndarray) -> np.ndarray:
    """Matrix with kernel ``[U(x) - U(y) - grad U(c) . (x - y)] omega(x; y)``, ``c = y + (x - y)/2``.

    Separations use the minimal image; midpoints on half-cells are reached by
    Fourier interpolation.  The result is anti-Hermitian.
    """
    grid = dm.grid
    d, n = grid.dim, grid.points
    U = np.asarray(U, dtype=float).reshape(grid.shape)
    grad = spectral_gradient(U, grid)
    disp = pair_displacements(grid)
    # midpoint index and half-cell flag per axis, built from 1D tables
    j = np.arange(n)
    s_idx = (j[:, None] - j[None, :]) % n
    s_idx = np.where(s_idx >= n // 2, s_idx - n, s_idx)
    s_idx[s_idx == -(n // 2)] = 0
    mid2 = 2 * j[None, :] + s_idx
    base1 = (mid2 // 2) % n
    odd1 = (mid2 % 2).astype(int)
    if d == 1:
        base = [base1.ravel()]
        odd = [odd1.ravel()]
    else:
        base, odd = [], []
        grids = np.meshgrid(*[j] * d, indexing="ij")
        flat = [g.ravel() for g in grids]
        for i in range(d):
            base.append(base1[flat[i][:, None], flat[i][None, :]].ravel())
            odd.append(odd1[flat[i][:, None], flat[i][None, :]].ravel())
    mask = np.zeros_like(odd[0])
    for i in range(d):
        mask = mask | (odd[i] << i)
    Uf = U.ravel()
    bracket = (Uf[:, None] - Uf[None, :]).ravel().astype(float)
    for i in range(d):
        stag = _staggered_values(grad[i], grid)
        gval = np.empty(bracket.shape)
        for m, vals in stag.items():
            sel = mask == m
            if np.any(sel):
                gval[sel] = vals[tuple(b[sel] for b in base)]
        bracket -= gval * disp[i].ravel()
    return bracket.reshape(grid.size, grid.size) * dm.matrix


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

MATRIX_MAGIC = b"HVLABDMX"


def save_density_matrix(dm: DensityMatrix, path, convention=None) -> None:
    header = {
        "dim": dm.grid.dim,
        "length": dm.grid.length,
        "points": dm.grid.points,
        "hbar": dm.hbar,
        "n_particles": dm.n_particles,
        "t": dm.t,
        "clipped": dm.clipped,
        "convention": None if convention is None else {"kinetic_factor": convention.kinetic_factor, "force_sign": convention.force_sign},
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MATRIX_MAGIC)
        fh.write(len(blob).to_bytes(4, "little"))
        fh.write(blob)
        fh.write(np.ascontiguousarray(dm.matrix, dtype="<c16").tobytes())
    sidecar = {
        "trace": dm.trace,
        "hermiticity_error": dm.hermiticity_error(),
        "min_eigenvalue": float(dm.eigenvalues()[0]),
        "max_eigenvalue": float(dm.eigenvalues()[-1]),
    }
    with open(str(path) + ".json", "w") as fh:
        json.dump(sidecar, fh, sort_keys=True, indent=2)
        fh.write("\n")


def load_density_matrix(path) -> DensityMatrix:
    with open(path, "rb") as fh:
        if fh.read(len(MATRIX_MAGIC)) != MATRIX_MAGIC:
            raise ValueError(f"{path}: not a density-matrix checkpoint")
        size = int.from_bytes(fh.read(4), "little")
        header = json.loads(fh.read(size))
        raw = fh.read()
    grid = SpatialGrid(header["length"], header["points"], header["dim"])
    m = np.frombuffer(raw, dtype="<c16").reshape(grid.size, grid.size).copy()
    return DensityMatrix(m, grid, header["hbar"], header["n_particles"], header["t"], header["clipped"])
