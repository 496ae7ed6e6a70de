"""Discrete Wigner transform and Weyl quantization on periodic grids.

The operator is stored as a matrix ``M = kernel * dx^d``.  Along each axis the
kernel is rewritten in (center, separation) coordinates: the separation
``s = m dx`` runs over ``m in [-n/2, n/2)`` and the center of an odd
separation sits half a cell to the right of a node.  Those half-cell samples
are moved onto the nodes by a Fourier shift (the Nyquist multiplier is set to
1 so the shift stays real-preserving and exactly invertible).  The separation
axis is then Fourier transformed to velocities ``v_k = -pi hbar/dx + k dv`` with
``dv = 2 pi hbar / L``.

The separation ``L/2`` is the same as ``-L/2`` on the torus, so a kernel entry
on that diagonal belongs to two centers half a box apart.  Both maps use the
average of the two readings.  This makes the Wigner function of a Hermitian
operator exactly real and the quantization of a real field exactly
Hermitian.  When that diagonal is not negligible (a state that has not
decayed at separation L/2, or a field too rough for the velocity spacing)
an ``AccuracyWarning`` is issued, since the torus then differs visibly from
the whole line.  Away from that diagonal both round trips are exact to
round-off.
"""

from __future__ import annotations

import math

import numpy as np

from .core import GridIncompatibilityError, NumericError, SpatialGrid, warn_accuracy, wigner_phase_grid

RESIDUE_TOL = 1e-10


def _index_maps(n: int):
    m = np.arange(n)
    m_signed = np.where(m < n // 2, m, m - n)
    j = np.arange(n)[:, None]
    a = (j + (m_signed[None, :] + 1) // 2) % n  # ceil(m/2)
    b = (a - m_signed[None, :]) % n
    return a, b, (m_signed % 2).astype(bool)


def _half_shift(arr: np.ndarray, axis: int, odd_axis: int, odd: np.ndarray, dx: float, sign: int):
    n = arr.shape[axis]
    q = 2 * np.pi * np.fft.fftfreq(n, d=dx)
    mult = np.exp(sign * 0.5j * q * dx)
    mult[n // 2] = 1.0
    sel = [slice(None)] * arr.ndim
    sel[odd_axis] = odd
    sel = tuple(sel)
    part = arr[sel]
    # the odd-selection does not remove the center axis, so its position is unchanged
    shape = [1] * part.ndim
    shape[axis] = n
    part = np.fft.ifft(np.fft.fft(part, axis=axis) * mult.reshape(shape), axis=axis)
    out = arr.copy()
    out[sel] = part
    return out


def _to_center(arr: np.ndarray, ax_a: int, ax_b: int, dx: float) -> np.ndarray:
    """Kernel axes (a, b) -> (center j, separation index m) with odd rows shifted onto nodes."""
    n = arr.shape[ax_a]
    a, b, odd = _index_maps(n)
    moved = np.moveaxis(arr, (ax_a, ax_b), (-2, -1))
    out = moved[..., a, b]
    out = np.moveaxis(out, (-2, -1), (ax_a, ax_b))
    return _half_shift(out, ax_a, ax_b, odd, dx, -1)


def _from_center(arr: np.ndarray, ax_a: int, ax_b: int, dx: float) -> np.ndarray:
    n = arr.shape[ax_a]
    a, b, odd = _index_maps(n)
    arr = _half_shift(arr, ax_a, ax_b, odd, dx, +1)
    moved = np.moveaxis(arr, (ax_a, ax_b), (-2, -1))
    out = np.empty_like(moved)
    out[..., a, b] = moved
    return np.moveaxis(out, (-2, -1), (ax_a, ax_b))


def _fold_edge(arr: np.ndarray, ax_j: int, ax_m: int) -> float:
    """Average the separation-L/2 row with its half-box translate in place; return the row size."""
    n = arr.shape[ax_j]
    sel = [slice(None)] * arr.ndim
    sel[ax_m] = n // 2
    sel = tuple(sel)
    row = arr[sel]
    j_axis = ax_j if ax_j < ax_m else ax_j - 1
    other = np.roll(row, n // 2, axis=j_axis)
    size = float(np.max(np.abs(row))) if row.size else 0.0
    arr[sel] = 0.5 * (row + other)
    return size


def _signs(n: int, d: int, axis: int, ndim: int) -> np.ndarray:
    m = np.arange(n)
    s = np.where(m % 2, -1.0, 1.0)
    shape = [1] * ndim
    shape[axis] = n
    return s.reshape(shape)


def wigner_array(matrix: np.ndarray, grid: SpatialGrid, hbar: float, check: bool = True) -> np.ndarray:
    """Wigner function of the operator ``matrix`` on the matched phase grid."""
    d, n = grid.dim, grid.points
    kernel = np.asarray(matrix).reshape((n,) * (2 * d)) / grid.cell_volume
    arr = kernel.astype(complex)
    scale = max(float(np.max(np.abs(arr))), 1e-300)
    folded = 0.0
    for i in range(d):
        arr = _to_center(arr, i, d + i, grid.dx)
        folded = max(folded, _fold_edge(arr, i, d + i))
        arr = arr * _signs(n, d, d + i, 2 * d)
    arr = np.fft.fftn(arr, axes=tuple(range(d, 2 * d))) * (grid.dx / (2 * np.pi)) ** d
    if check:
        wscale = max(float(np.max(np.abs(arr.real))), 1e-300)
        resid = float(np.max(np.abs(arr.imag))) / wscale
        if resid > RESIDUE_TOL:
            raise NumericError(f"wigner: imaginary residue {resid:.3e} exceeds {RESIDUE_TOL:g}; operator is not Hermitian")
        if folded / scale > RESIDUE_TOL:
            warn_accuracy(f"wigner: kernel at separation L/2 is {folded / scale:.3e} of its maximum; state not localized in the box")
    return arr.real.copy()


def weyl_array(values: np.ndarray, grid: SpatialGrid, hbar: float, n_particles: float, check: bool = True) -> np.ndarray:
    """Operator matrix (``kernel * dx^d``) quantizing ``values`` given on the matched phase grid."""
    d, n = grid.dim, grid.points
    pg = wigner_phase_grid(grid, hbar)
    values = np.asarray(values, dtype=float)
    if values.shape != pg.shape:
        raise GridIncompatibilityError(f"field shape {values.shape} does not match phase grid {pg.shape}")
    arr = np.fft.ifftn(values, axes=tuple(range(d, 2 * d))) * (n * pg.dv) ** d
    folded = 0.0
    for i in range(d):
        arr = arr * _signs(n, d, d + i, 2 * d)
        folded = max(folded, _fold_edge(arr, i, d + i))
        arr = _from_center(arr, i, d + i, grid.dx)
    scale = max(float(np.max(np.abs(arr))), 1e-300)
    matrix = (n_particles * grid.cell_volume) * arr.reshape(n ** d, n ** d)
    if check:
        mscale = max(float(np.max(np.abs(matrix))), 1e-300)
        resid = float(np.max(np.abs(matrix - matrix.conj().T))) / mscale
        if resid > RESIDUE_TOL:
            raise NumericError(f"weyl: non-Hermitian residue {resid:.3e} exceeds {RESIDUE_TOL:g}")
        if folded / scale > RESIDUE_TOL:
            warn_accuracy(f"weyl: kernel at separation L/2 is {folded / scale:.3e} of its maximum; field under-resolved in v")
    return matrix


def wigner(dm, phase_grid=None, check: bool = True):
    """Wigner function of a density matrix as a phase-space field."""
    from .kinetic import PhaseSpaceField

    pg = wigner_phase_grid(dm.grid, dm.hbar)
    if phase_grid is not None and not phase_grid.matches(pg):
        raise GridIncompatibilityError(
            f"wigner grid (vmax={pg.vmax:.6g}, nv={pg.vpoints}) differs from requested "
            f"(vmax={phase_grid.vmax:.6g}, nv={phase_grid.vpoints})"
        )
    return PhaseSpaceField(pg, wigner_array(dm.matrix, dm.grid, dm.hbar, check), getattr(dm, "t", 0.0))


def weyl(field, hbar: float, n_particles: float, check: bool = True):
    """Weyl quantization of a phase-space field; its grid must be the Wigner grid of ``hbar``."""
    from .quantum import DensityMatrix

    pg = wigner_phase_grid(field.grid.spatial, hbar)
    if not field.grid.matches(pg):
        raise GridIncompatibilityError(
            f"field velocity grid (vmax={field.grid.vmax:.6g}, nv={field.grid.vpoints}) does not match "
            f"the quantization stride for hbar={hbar:.6g} (vmax={pg.vmax:.6g}, nv={pg.vpoints})"
        )
    matrix = weyl_array(field.values, field.grid.spatial, hbar, n_particles, check)
    return DensityMatrix(matrix, field.grid.spatial, float(hbar), n_particles, field.t)


def marginal_density(values: np.ndarray, dv: float, d: int) -> np.ndarray:
    return values.sum(axis=tuple(range(d, 2 * d))) * dv ** d


def mass(values: np.ndarray, cell_volume: float) -> float:
    return float(math.fsum(np.ravel(values))) * cell_volume
