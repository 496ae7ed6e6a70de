"""Vlasov solver on a periodic phase-space grid.

Advection in x and in v is done by exact Fourier shifts (semi-Lagrangian with
spectral interpolation), combined by Strang splitting around a frozen force.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import dataclass, replace

import numpy as np

from .core import ConfigurationError, NumericError, PhaseGrid, SpatialGrid, warn_accuracy
from .potentials import PeriodicKernel, mean_field, spectral_gradient

EDGE_FRACTION = 0.1
EDGE_TOL = 1e-12
MAX_OUTFLOW_STEPS = 10


class DomainTooSmallError(NumericError):
    pass


@dataclass(frozen=True)
class PhaseSpaceField:
    grid: PhaseGrid
    values: np.ndarray
    t: float = 0.0
    outflow_steps: int = 0

    def __post_init__(self):
        vals = np.asarray(self.values)
        if vals.shape != self.grid.shape:
            raise ValueError(f"values shape {vals.shape} does not match grid {self.grid.shape}")
        if np.iscomplexobj(vals):
            raise ValueError("phase-space values must be real")
        if not np.all(np.isfinite(vals)):
            raise NumericError("phase-space values are not finite")

    @property
    def dim(self) -> int:
        return self.grid.dim

    @property
    def mass(self) -> float:
        return float(math.fsum(np.ravel(self.values))) * self.grid.cell_volume

    def with_values(self, values, t=None) -> "PhaseSpaceField":
        return replace(self, values=values, t=self.t if t is None else t)


def _advect_x(values: np.ndarray, grid: PhaseGrid, tau: float) -> np.ndarray:
    """``W(x, v) <- W(x - v tau, v)`` for every velocity row."""
    d = grid.dim
    n = grid.spatial.points
    q = grid.spatial.wavenumbers()
    v = grid.velocities
    hat = np.fft.fftn(values, axes=tuple(range(d)))
    for i in range(d):
        mult = np.exp(-1j * np.outer(q, v) * tau)
        mult[n // 2, :] = 1.0
        shape = [1] * (2 * d)
        shape[i] = n
        shape[d + i] = grid.vpoints
        hat *= mult.reshape(shape)
    return np.real(np.fft.ifftn(hat, axes=tuple(range(d))))


def _advect_v(values: np.ndarray, grid: PhaseGrid, force: np.ndarray, tau: float) -> np.ndarray:
    """``W(x, v) <- W(x, v - F(x) tau)`` for every position column."""
    d = grid.dim
    nv = grid.vpoints
    eta = grid.velocity_wavenumbers()
    hat = np.fft.fftn(values, axes=tuple(range(d, 2 * d)))
    for i in range(d):
        f = force[i]
        mult = np.exp(-1j * f[..., None] * eta * tau)
        mult[..., nv // 2] = 1.0
        shape = list(grid.spatial.shape) + [1] * d
        shape[d + i] = nv
        hat *= mult.reshape(shape)
    return np.real(np.fft.ifftn(hat, axes=tuple(range(d, 2 * d))))


def vlasov_density(field: PhaseSpaceField) -> np.ndarray:
    d = field.dim
    return field.values.sum(axis=tuple(range(d, 2 * d))) * field.grid.dv ** d


def edge_mass(field: PhaseSpaceField) -> float:
    """Largest |W| within the outer 10% of the velocity box, relative to max |W|."""
    d = field.dim
    v = field.grid.velocities
    edge = np.abs(v) >= (1 - EDGE_FRACTION) * field.grid.vmax
    scale = float(np.max(np.abs(field.values)))
    if scale == 0.0:
        return 0.0
    worst = 0.0
    for i in range(d):
        sub = np.compress(edge, field.values, axis=d + i)
        if sub.size:
            worst = max(worst, float(np.max(np.abs(sub))))
    return worst / scale


def vlasov_force(field: PhaseSpaceField, kernel: PeriodicKernel | None, force_sign: int) -> np.ndarray:
    grid = field.grid.spatial
    rho = vlasov_density(field)
    if kernel is None:
        return np.zeros((grid.dim,) + grid.shape)
    _, F = mean_field(kernel, rho, grid, force_sign)
    if not np.all(np.isfinite(F)):
        raise NumericError("force contains non-finite values")
    return F


def vlasov_step(field: PhaseSpaceField, dt: float, kernel: PeriodicKernel | None, force_sign: int = -1) -> PhaseSpaceField:
    """One Strang step: x-half, v-full with the force of the half-advected density, x-half.

    ``kernel=None`` means no interaction.  A field that is not negligible near
    the velocity boundary is flagged; if that persists for more than ten
    consecutive steps the velocity box is declared too small.
    """
    if dt <= 0:
        raise ConfigurationError("dt must be positive")
    grid = field.grid
    w = _advect_x(field.values, grid, 0.5 * dt)
    half = field.with_values(w)
    F = vlasov_force(half, kernel, force_sign)
    fmax = float(np.max(np.abs(F))) if F.size else 0.0
    if fmax * dt > grid.dv:
        warn_accuracy(f"dt*max|F| = {fmax * dt:.3e} exceeds the velocity spacing {grid.dv:.3e}")
    w = _advect_v(w, grid, F, dt)
    w = _advect_x(w, grid, 0.5 * dt)
    out = PhaseSpaceField(grid, w, field.t + dt, 0)
    if edge_mass(out) > EDGE_TOL:
        steps = field.outflow_steps + 1
        if steps > MAX_OUTFLOW_STEPS:
            raise DomainTooSmallError(
                f"phase-space density reaches the velocity boundary for {steps} consecutive steps; enlarge vmax"
            )
        warn_accuracy(f"outflow: field is {edge_mass(out):.3e} of its maximum near |v| = vmax")
        out = replace(out, outflow_steps=steps)
    return out


def free_transport_reference(field: PhaseSpaceField, t: float) -> PhaseSpaceField:
    """Exact ``W0(x - v t, v)`` by one spectral shift."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0:
        return field.with_values(field.values.copy())
    return field.with_values(_advect_x(field.values, field.grid, t), field.t + t)


def _derivative_orders(d2: int, k: int):
    for total in range(k + 1):
        for beta in itertools.product(range(total + 1), repeat=d2):
            if sum(beta) == total:
                yield beta


def sobolev_norm(field: PhaseSpaceField, k: int, a: float) -> float:
    """``(sum_{|beta| <= k} int (1 + x^2 + v^2)^a |d^beta f|^2 dx dv)^(1/2)``."""
    if not 0 <= k <= 6 or int(k) != k:
        raise ValueError(f"derivative order must be an integer in 0..6, got {k}")
    if a < 0:
        raise ValueError("weight exponent must be nonnegative")
    g = field.grid
    d = g.dim
    vals = field.values
    scale = float(np.max(np.abs(vals)))
    if scale == 0.0:
        return 0.0
    boundary = 0.0
    for ax in range(2 * d):
        boundary = max(boundary, float(np.max(np.abs(np.take(vals, [0], axis=ax)))))
    if k > 0 and boundary > 1e-6 * scale:
        warn_accuracy(f"spectral derivatives of a field that is {boundary / scale:.2e} of its max at the boundary")
    coords = g.axes_coordinates()
    weight = (1.0 + sum(c * c for c in coords)) ** a
    hat = np.fft.fftn(vals)
    waves = []
    for ax in range(2 * d):
        n = vals.shape[ax]
        kk = g.spatial.wavenumbers() if ax < d else g.velocity_wavenumbers()
        kk = kk.copy()
        kk[n // 2] = 0.0
        sh = [1] * (2 * d)
        sh[ax] = n
        waves.append(kk.reshape(sh))
    total = 0.0
    for beta in _derivative_orders(2 * d, k):
        if sum(beta) == 0:
            deriv = vals
        else:
            mult = 1.0
            for ax, b in enumerate(beta):
                if b:
                    mult = mult * (1j * waves[ax]) ** b
            deriv = np.real(np.fft.ifftn(hat * mult))
        total += float(np.sum(weight * deriv * deriv))
    return math.sqrt(total * g.cell_volume)


def density_curvature(field: PhaseSpaceField) -> float:
    """``max |Hessian rho|`` of the spatial density (largest entry)."""
    grid = field.grid.spatial
    rho = vlasov_density(field)
    grad = spectral_gradient(rho, grid)
    worst = 0.0
    for comp in grad:
        worst = max(worst, float(np.max(np.abs(spectral_gradient(comp, grid)))))
    return worst


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

FIELD_MAGIC = b"HVLABPSF"


def save_field(field: PhaseSpaceField, path) -> None:
    g = field.grid
    header = {
        "dim": g.dim,
        "length": g.spatial.length,
        "points": g.spatial.points,
        "vmax": g.vmax,
        "vpoints": g.vpoints,
        "t": field.t,
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(FIELD_MAGIC)
        fh.write(len(blob).to_bytes(4, "little"))
        fh.write(blob)
        fh.write(np.ascontiguousarray(field.values, dtype="<f8").tobytes())


def load_field(path) -> PhaseSpaceField:
    with open(path, "rb") as fh:
        if fh.read(len(FIELD_MAGIC)) != FIELD_MAGIC:
            raise ValueError(f"{path}: not a phase-space field checkpoint")
        size = int.from_bytes(fh.read(4), "little")
        header = json.loads(fh.read(size))
        raw = fh.read()
    sg = SpatialGrid(header["length"], header["points"], header["dim"])
    pg = PhaseGrid(sg, header["vmax"], header["vpoints"])
    values = np.frombuffer(raw, dtype="<f8").reshape(pg.shape).copy()
    return PhaseSpaceField(pg, values, header["t"])


SERIES_COLUMNS = ("t", "mass", "min_w", "max_w", "sobolev_h1_4", "sobolev_h2_4", "max_hess_rho")


def series_row(field: PhaseSpaceField) -> dict:
    return {
        "t": field.t,
        "mass": field.mass,
        "min_w": float(np.min(field.values)),
        "max_w": float(np.max(field.values)),
        "sobolev_h1_4": sobolev_norm(field, 1, 4),
        "sobolev_h2_4": sobolev_norm(field, 2, 4),
        "max_hess_rho": density_curvature(field),
    }


def write_series(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SERIES_COLUMNS)
        for row in rows:
            w.writerow([format(float(row[c]), ".17g") for c in SERIES_COLUMNS])
